//! Weighted least squares with absorbed fixed effects and cluster-robust
//! covariance. Shared numerical core for OLS, post-Lasso, the DDD designs,
//! and the IRLS inner loop of the Poisson estimator.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{alternating_demean, ClusterKey, Partition};

/// A named design matrix, stored column-major.
#[derive(Debug, Clone, Default)]
pub struct Design {
    pub names: Vec<String>,
    pub cols: Vec<Vec<f64>>,
}

impl Design {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, col: Vec<f64>) {
        if let Some(first) = self.cols.first() {
            assert_eq!(col.len(), first.len(), "design columns must be row-aligned");
        }
        self.names.push(name.into());
        self.cols.push(col);
    }

    pub fn n_rows(&self) -> usize {
        self.cols.first().map_or(0, |c| c.len())
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.n_rows();
        DMatrix::from_fn(n, self.n_cols(), |i, j| self.cols[j][i])
    }

    /// Append one dummy column per level of a partition, skipping `skip`
    /// reference levels (in cell-id order).
    pub fn push_dummies(&mut self, prefix: &str, p: &Partition, skip: usize) {
        let n = p.cell_of.len();
        for level in skip..p.n_cells {
            let col: Vec<f64> =
                (0..n).map(|i| if p.cell_of[i] as usize == level { 1.0 } else { 0.0 }).collect();
            self.push(format!("{prefix}{level}"), col);
        }
    }
}

/// Coefficients with a sandwich covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// Covariance over `names`, row-major.
    pub vcov: Vec<Vec<f64>>,
    pub n_obs: usize,
    pub dof_resid: usize,
    pub r_squared: f64,
    pub estimator: String,
    pub n_clusters: Option<usize>,
    pub small_sample_factor: f64,
    /// Columns dropped as aliased, in user order.
    pub dropped: Vec<String>,
}

impl RegressionFit {
    pub fn se(&self) -> Vec<f64> {
        (0..self.coef.len()).map(|j| self.vcov[j][j].max(0.0).sqrt()).collect()
    }

    pub fn coef_map(&self) -> IndexMap<String, f64> {
        self.names.iter().cloned().zip(self.coef.iter().copied()).collect()
    }

    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.coef[j])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.vcov[j][j].max(0.0).sqrt())
    }

    pub fn vcov_matrix(&self) -> DMatrix<f64> {
        let k = self.coef.len();
        DMatrix::from_fn(k, k, |i, j| self.vcov[i][j])
    }
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Identify aliased columns by modified Gram-Schmidt in user order.
/// Returns indices of kept columns; a column is dropped when its residual
/// after projection on the kept basis falls below `tol` relative to its norm.
fn rank_screen(x: &DMatrix<f64>, tol: f64) -> (Vec<usize>, Vec<usize>) {
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..x.ncols() {
        let mut v = DVector::from_fn(n, |i, _| x[(i, j)]);
        let orig = v.norm();
        if orig == 0.0 {
            dropped.push(j);
            continue;
        }
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        // second pass for numerical safety
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        if v.norm() <= tol * orig {
            dropped.push(j);
        } else {
            v /= v.norm();
            basis.push(v);
            kept.push(j);
        }
    }
    (kept, dropped)
}

const RANK_TOL: f64 = 1e-8;

/// Drop aliased design columns in user order, optionally judging rank on
/// the fixed-effect-demeaned columns (collinearity with absorbed effects).
/// Returns the reduced design and the dropped names.
pub(crate) fn screen_design(
    x: &Design,
    fe: Option<&[Partition]>,
) -> Result<(Design, Vec<String>)> {
    let n = x.n_rows();
    let mut probe = x.cols.clone();
    if let Some(parts) = fe {
        if !parts.is_empty() {
            for col in probe.iter_mut() {
                alternating_demean(col, parts, None)?;
            }
        }
    }
    let m = DMatrix::from_fn(n, x.n_cols(), |i, j| probe[j][i]);
    let (kept, dropped_idx) = rank_screen(&m, RANK_TOL);
    if kept.is_empty() {
        return Err(Error::RankDeficient(x.names.clone()));
    }
    if dropped_idx.is_empty() {
        return Ok((x.clone(), Vec::new()));
    }
    let mut reduced = Design::new();
    for &j in &kept {
        reduced.push(x.names[j].clone(), x.cols[j].clone());
    }
    let dropped = dropped_idx.iter().map(|&j| x.names[j].clone()).collect();
    Ok((reduced, dropped))
}

/// Ordinary / weighted least squares with optional fixed-effect absorption
/// and clustered covariance.
///
/// When `fe` partitions are given, `y` and every column of `x` are
/// (weighted-)demeaned over the cells before the normal equations are
/// solved. Aliased columns are dropped in user order and reported in
/// `RegressionFit::dropped`.
pub fn ols_fit(
    y: &[f64],
    x: &Design,
    weights: Option<&[f64]>,
    fe: Option<&[Partition]>,
    cluster: Option<&ClusterKey>,
) -> Result<RegressionFit> {
    let n = y.len();
    assert_eq!(x.n_rows(), n, "rows(X) must equal len(y)");
    if let Some(w) = weights {
        assert_eq!(w.len(), n);
    }

    // Absorb fixed effects.
    let mut yt = y.to_vec();
    let mut xt: Vec<Vec<f64>> = x.cols.clone();
    if let Some(parts) = fe {
        if !parts.is_empty() {
            alternating_demean(&mut yt, parts, weights)?;
            for col in xt.iter_mut() {
                alternating_demean(col, parts, weights)?;
            }
        }
    }

    let xm = DMatrix::from_fn(n, xt.len(), |i, j| xt[j][i]);
    let (kept, dropped_idx) = rank_screen(&xm, RANK_TOL);
    if kept.is_empty() {
        return Err(Error::RankDeficient(x.names.clone()));
    }
    let dropped: Vec<String> = dropped_idx.iter().map(|&j| x.names[j].clone()).collect();
    let k = kept.len();
    let xk = DMatrix::from_fn(n, k, |i, j| xm[(i, kept[j])]);
    let yv = DVector::from_column_slice(&yt);

    // Weighted cross-products.
    let xtx = match weights {
        Some(w) => {
            let mut xw = xk.clone();
            for i in 0..n {
                for j in 0..k {
                    xw[(i, j)] *= w[i];
                }
            }
            xw.transpose() * &xk
        }
        None => xk.transpose() * &xk,
    };
    // Solve via QR on the (sqrt-weighted) design for stability.
    let coef = {
        let (a, b) = match weights {
            Some(w) => {
                let mut xs = xk.clone();
                let mut ys = yv.clone();
                for i in 0..n {
                    let s = w[i].max(0.0).sqrt();
                    for j in 0..k {
                        xs[(i, j)] *= s;
                    }
                    ys[i] *= s;
                }
                (xs, ys)
            }
            None => (xk.clone(), yv.clone()),
        };
        let qr = a.qr();
        let qty = qr.q().transpose() * &b;
        qr.r()
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::RankDeficient(x.names.clone()))?
    };

    let fitted = &xk * &coef;
    let resid: Vec<f64> = (0..n).map(|i| yt[i] - fitted[i]).collect();

    // R-squared on the absorbed outcome.
    let wmean = match weights {
        Some(w) => {
            let sw: f64 = w.iter().sum();
            yt.iter().zip(w).map(|(&v, &wi)| wi * v).sum::<f64>() / sw
        }
        None => yt.iter().sum::<f64>() / n as f64,
    };
    let (mut tss, mut rss) = (0.0, 0.0);
    for i in 0..n {
        let wi = weights.map_or(1.0, |w| w[i]);
        tss += wi * (yt[i] - wmean).powi(2);
        rss += wi * resid[i].powi(2);
    }
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };

    let dof_resid = n.saturating_sub(k);
    let bread = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(x.names.clone()))?;

    // Scores s_i = w_i * x_i * u_i.
    let scores = |i: usize| -> DVector<f64> {
        let wi = weights.map_or(1.0, |w| w[i]);
        DVector::from_fn(k, |j, _| wi * xk[(i, j)] * resid[i])
    };

    let (meat, factor, n_clusters) = match cluster {
        Some(ck) => {
            if ck.n_clusters < 2 {
                return Err(Error::TooFewClusters(ck.n_clusters));
            }
            let mut sums = vec![DVector::zeros(k); ck.n_clusters];
            for i in 0..n {
                let s = scores(i);
                sums[ck.cell_of[i] as usize] += s;
            }
            let mut meat = DMatrix::zeros(k, k);
            for s in &sums {
                meat += s * s.transpose();
            }
            let g = ck.n_clusters as f64;
            let factor = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
            (meat, factor, Some(ck.n_clusters))
        }
        None => {
            let mut meat = DMatrix::zeros(k, k);
            for i in 0..n {
                let s = scores(i);
                meat += &s * s.transpose();
            }
            // HC1
            let factor = n as f64 / (n as f64 - k as f64);
            (meat, factor, None)
        }
    };
    let vcov = &bread * meat * &bread * factor;

    Ok(RegressionFit {
        names: kept.iter().map(|&j| x.names[j].clone()).collect(),
        coef: coef.iter().copied().collect(),
        vcov: matrix_to_rows(&vcov),
        n_obs: n,
        dof_resid,
        r_squared,
        estimator: "ols".to_string(),
        n_clusters,
        small_sample_factor: factor,
        dropped,
    })
}

/// CR1 sandwich covariance from raw ingredients.
pub fn clustered_vcov(x: &DMatrix<f64>, resid: &[f64], cluster: &ClusterKey) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let k = x.ncols();
    assert_eq!(resid.len(), n);
    if cluster.n_clusters < 2 {
        return Err(Error::TooFewClusters(cluster.n_clusters));
    }
    let bread = (x.transpose() * x)
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(vec!["<unnamed>".to_string()]))?;
    let mut sums = vec![DVector::zeros(k); cluster.n_clusters];
    for i in 0..n {
        let s = DVector::from_fn(k, |j, _| x[(i, j)] * resid[i]);
        sums[cluster.cell_of[i] as usize] += s;
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in &sums {
        meat += s * s.transpose();
    }
    let g = cluster.n_clusters as f64;
    let factor = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    Ok(bread.clone() * meat * bread * factor)
}

/// Two-sided normal p-value for coef/se.
pub fn normal_p_value(coef: f64, se: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    if se <= 0.0 {
        return f64::NAN;
    }
    let z = (coef / se).abs();
    let n = Normal::new(0.0, 1.0).unwrap();
    2.0 * (1.0 - n.cdf(z))
}

/// Wald statistic and chi-square p-value for the joint hypothesis that the
/// listed coefficients are all zero.
pub fn wald_joint(
    names: &[String],
    coef: &[f64],
    vcov: &[Vec<f64>],
    targets: &[String],
) -> Option<(f64, f64)> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let idx: Vec<usize> =
        targets.iter().filter_map(|n| names.iter().position(|m| m == n)).collect();
    if idx.is_empty() {
        return None;
    }
    let q = idx.len();
    let b = DVector::from_fn(q, |i, _| coef[idx[i]]);
    let v = DMatrix::from_fn(q, q, |i, j| vcov[idx[i]][idx[j]]);
    let vinv = v.try_inverse()?;
    let stat = (b.transpose() * vinv * b)[(0, 0)];
    let chi = ChiSquared::new(q as f64).ok()?;
    Some((stat, 1.0 - chi.cdf(stat.max(0.0))))
}
