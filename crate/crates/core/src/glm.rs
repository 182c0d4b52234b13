//! Likelihood-based estimators: Poisson pseudo-maximum-likelihood with
//! absorbed fixed effects, left-censored Tobit (Newton on the Olsen
//! reparameterization), and Probit with average marginal effects.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::panel::{alternating_demean, ClusterKey, Partition};
use crate::regress::{matrix_to_rows, screen_design, Design};

/// Fit of a likelihood-based estimator with a robust sandwich covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LikelihoodFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub pseudo_r_squared: f64,
    /// Tobit scale, where applicable.
    pub sigma: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub estimator: String,
    pub n_clusters: Option<usize>,
    /// Deviance (PPML) or log-likelihood (Tobit/Probit) per iteration.
    pub trace: Vec<f64>,
    /// Columns dropped as aliased, in user order.
    #[serde(default)]
    pub dropped: Vec<String>,
}

impl LikelihoodFit {
    pub fn se(&self) -> Vec<f64> {
        (0..self.coef.len()).map(|j| self.vcov[j][j].max(0.0).sqrt()).collect()
    }

    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.coef[j])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.vcov[j][j].max(0.0).sqrt())
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Inverse Mills ratio φ(z)/Φ(z), stable in the lower tail.
fn mills(z: f64) -> f64 {
    let n = std_normal();
    let cdf = n.cdf(z);
    if cdf > 1e-300 {
        n.pdf(z) / cdf
    } else {
        // Asymptotic φ/Φ ≈ −z for z → −∞.
        -z
    }
}

fn ln_cdf(z: f64) -> f64 {
    let n = std_normal();
    let cdf = n.cdf(z);
    if cdf > 1e-300 {
        cdf.ln()
    } else {
        // ln Φ(z) ≈ ln φ(z) − ln(−z) for z → −∞.
        n.pdf(z).max(f64::MIN_POSITIVE).ln() - (-z).ln()
    }
}

/// Sandwich covariance from per-row scores and an inverse-information bread.
fn sandwich(
    bread: &DMatrix<f64>,
    scores: &DMatrix<f64>,
    cluster: Option<&ClusterKey>,
) -> Result<(DMatrix<f64>, Option<usize>)> {
    let (n, k) = (scores.nrows(), scores.ncols());
    let (meat, factor, n_clusters) = match cluster {
        Some(ck) => {
            if ck.n_clusters < 2 {
                return Err(Error::TooFewClusters(ck.n_clusters));
            }
            let mut sums: Vec<DVector<f64>> = vec![DVector::zeros(k); ck.n_clusters];
            for i in 0..n {
                for j in 0..k {
                    sums[ck.cell_of[i] as usize][j] += scores[(i, j)];
                }
            }
            let mut meat = DMatrix::zeros(k, k);
            for s in &sums {
                meat += s * s.transpose();
            }
            let g = ck.n_clusters as f64;
            (meat, g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64), Some(ck.n_clusters))
        }
        None => {
            let meat = scores.transpose() * scores;
            (meat, n as f64 / (n as f64 - k as f64), None)
        }
    };
    Ok((bread * meat * bread * factor, n_clusters))
}

/// Flag a regressor whose sign perfectly predicts the indicator `event`.
fn separation_check(x: &Design, event: &[bool]) -> Option<String> {
    let n = event.len();
    if event.iter().all(|&e| e) || event.iter().all(|&e| !e) {
        return None;
    }
    for (name, col) in x.names.iter().zip(&x.cols) {
        let positive = |v: f64| v > 0.0;
        let all_match = (0..n).all(|i| positive(col[i]) == event[i]);
        let all_anti = (0..n).all(|i| positive(col[i]) != event[i]);
        let constant = col.iter().all(|&v| positive(v) == positive(col[0]));
        if (all_match || all_anti) && !constant {
            return Some(name.clone());
        }
    }
    None
}

const PPML_TOL: f64 = 1e-10;
const PPML_MAX_ITER: usize = 100;

/// Poisson pseudo-maximum likelihood via IRLS, with fixed effects absorbed
/// by weighted alternating demeaning inside each step.
pub fn fit_ppml(
    y: &[f64],
    x: &Design,
    fe: Option<&[Partition]>,
    cluster: Option<&ClusterKey>,
) -> Result<LikelihoodFit> {
    let n = y.len();
    assert_eq!(x.n_rows(), n);
    if y.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidConfig("PPML outcome must be nonnegative".into()));
    }
    let ybar = y.iter().sum::<f64>() / n as f64;
    if ybar == 0.0 {
        return Err(Error::AllZeroOutcome);
    }
    let event: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
    if let Some(name) = separation_check(x, &event) {
        return Err(Error::Separation(name));
    }
    let (x, dropped) = screen_design(x, fe)?;
    let x = &x;

    let k = x.n_cols();
    let deviance = |mu: &[f64]| -> f64 {
        let mut d = 0.0;
        for i in 0..n {
            if y[i] > 0.0 {
                d += y[i] * (y[i] / mu[i]).ln() - (y[i] - mu[i]);
            } else {
                d += mu[i];
            }
        }
        2.0 * d
    };

    let mut mu: Vec<f64> = y.iter().map(|&v| (v + ybar) / 2.0).collect();
    let mut eta: Vec<f64> = mu.iter().map(|&m| m.ln()).collect();
    let mut dev = deviance(&mu);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut iterations = 0;
    let mut coef = DVector::zeros(k);
    let mut xt_demeaned = DMatrix::zeros(n, k);
    let mut last_change = f64::INFINITY;

    for iter in 0..PPML_MAX_ITER {
        iterations = iter + 1;
        let w: Vec<f64> = mu.clone();
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (y[i] - mu[i]) / mu[i]).collect();

        // Weighted absorption of FE from working response and design.
        let mut zt = z.clone();
        let mut xt: Vec<Vec<f64>> = x.cols.clone();
        if let Some(parts) = fe {
            if !parts.is_empty() {
                alternating_demean(&mut zt, parts, Some(&w))?;
                for col in xt.iter_mut() {
                    alternating_demean(col, parts, Some(&w))?;
                }
            }
        }
        let xm = DMatrix::from_fn(n, k, |i, j| xt[j][i]);
        let mut xw = xm.clone();
        for i in 0..n {
            for j in 0..k {
                xw[(i, j)] *= w[i];
            }
        }
        let xtwx = xw.transpose() * &xm;
        let xtwz = xw.transpose() * DVector::from_column_slice(&zt);
        coef = xtwx
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&xtwz))
            .ok_or_else(|| Error::RankDeficient(x.names.clone()))?;

        // η = z − working residual (fixed-effect part folded back in).
        let fitted = &xm * &coef;
        for i in 0..n {
            eta[i] = z[i] - (zt[i] - fitted[i]);
            // Step cap keeps exp() finite on wild early iterations.
            eta[i] = eta[i].clamp(-30.0, 30.0);
        }
        mu = eta.iter().map(|&e| e.exp()).collect();
        let dev_new = deviance(&mu);
        trace.push(dev_new);
        last_change = (dev - dev_new).abs();
        xt_demeaned = xm;
        if last_change < PPML_TOL * (1.0 + dev_new.abs()) {
            dev = dev_new;
            converged = true;
            break;
        }
        dev = dev_new;
    }
    if !converged {
        return Err(Error::EstimatorNoConvergence { iterations, last_change });
    }

    // Robust sandwich on the absorbed design: scores x̃_i (y_i − μ_i),
    // bread (X̃'WX̃)^{-1}.
    let mut xw = xt_demeaned.clone();
    for i in 0..n {
        for j in 0..k {
            xw[(i, j)] *= mu[i];
        }
    }
    let bread = (xw.transpose() * &xt_demeaned)
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(x.names.clone()))?;
    let mut scores = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            scores[(i, j)] = xt_demeaned[(i, j)] * (y[i] - mu[i]);
        }
    }
    let (vcov, n_clusters) = sandwich(&bread, &scores, cluster)?;

    let ll: f64 = (0..n).map(|i| y[i] * mu[i].ln() - mu[i]).sum();
    let null_dev = {
        let mu0 = vec![ybar; n];
        deviance(&mu0)
    };
    let pseudo_r2 = if null_dev > 0.0 { 1.0 - dev / null_dev } else { 0.0 };

    Ok(LikelihoodFit {
        names: x.names.clone(),
        coef: coef.iter().copied().collect(),
        vcov: matrix_to_rows(&vcov),
        log_likelihood: ll,
        pseudo_r_squared: pseudo_r2,
        sigma: None,
        converged,
        iterations,
        n_obs: n,
        estimator: "ppml".to_string(),
        n_clusters,
        trace,
        dropped,
    })
}

/// Censored-normal log-likelihood and analytic gradient in (β, ln σ) for a
/// left-censoring point `censor`. Used directly by finite-difference checks.
pub fn tobit_loglik_grad(
    y: &[f64],
    x: &DMatrix<f64>,
    censor: f64,
    beta: &[f64],
    ln_sigma: f64,
) -> (f64, Vec<f64>) {
    let n = y.len();
    let k = x.ncols();
    let sigma = ln_sigma.exp();
    let normal = std_normal();
    let mut ll = 0.0;
    let mut grad = vec![0.0; k + 1];
    for i in 0..n {
        let xb: f64 = (0..k).map(|j| x[(i, j)] * beta[j]).sum();
        if y[i] > censor {
            let e = (y[i] - xb) / sigma;
            ll += -ln_sigma + normal.pdf(e).max(f64::MIN_POSITIVE).ln();
            for j in 0..k {
                grad[j] += e * x[(i, j)] / sigma;
            }
            grad[k] += -1.0 + e * e;
        } else {
            let z = (censor - xb) / sigma;
            ll += ln_cdf(z);
            let lam = mills(z);
            for j in 0..k {
                grad[j] += -lam * x[(i, j)] / sigma;
            }
            grad[k] += -lam * z;
        }
    }
    (ll, grad)
}

const TOBIT_TOL: f64 = 1e-10;
const TOBIT_MAX_ITER: usize = 200;

/// Left-censored Tobit by Newton with line search on the Olsen
/// reparameterization (δ = β/σ, γ = 1/σ), under which the likelihood is
/// globally concave. Fixed effects enter as explicit dummy columns.
pub fn fit_tobit(
    y: &[f64],
    x: &Design,
    censor: f64,
    cluster: Option<&ClusterKey>,
) -> Result<LikelihoodFit> {
    let n = y.len();
    assert_eq!(x.n_rows(), n);
    if y.iter().all(|&v| v <= censor) {
        return Err(Error::NoVariation);
    }
    let (x, dropped) = screen_design(x, None)?;
    let x = &x;
    let k = x.n_cols();
    let xm = x.to_matrix();
    let normal = std_normal();

    // OLS start on the uncensored rows (all rows if nothing is censored).
    let (beta0, sigma0) = {
        let rows: Vec<usize> = (0..n).filter(|&i| y[i] > censor).collect();
        let xs = DMatrix::from_fn(rows.len(), k, |i, j| xm[(rows[i], j)]);
        let ys = DVector::from_fn(rows.len(), |i, _| y[rows[i]]);
        let xtx = xs.transpose() * &xs;
        let beta = xtx
            .cholesky()
            .map(|ch| ch.solve(&(xs.transpose() * &ys)))
            .unwrap_or_else(|| DVector::zeros(k));
        let resid = &ys - &xs * &beta;
        let s2 = resid.norm_squared() / rows.len().max(1) as f64;
        (beta, s2.sqrt().max(1e-3))
    };
    let mut gamma = 1.0 / sigma0;
    let mut delta = &beta0 * gamma;

    let loglik = |delta: &DVector<f64>, gamma: f64| -> f64 {
        let mut ll = 0.0;
        for i in 0..n {
            let xd: f64 = (0..k).map(|j| xm[(i, j)] * delta[j]).sum();
            if y[i] > censor {
                let e = gamma * y[i] - xd;
                ll += gamma.ln() + normal.pdf(e).max(f64::MIN_POSITIVE).ln();
            } else {
                ll += ln_cdf(gamma * censor - xd);
            }
        }
        ll
    };

    let mut ll = loglik(&delta, gamma);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;

    for iter in 0..TOBIT_MAX_ITER {
        iterations = iter + 1;
        // Gradient and Hessian in θ = (δ, γ).
        let mut g = DVector::zeros(k + 1);
        let mut h = DMatrix::zeros(k + 1, k + 1);
        for i in 0..n {
            let xi = DVector::from_fn(k, |j, _| xm[(i, j)]);
            let xd = xi.dot(&delta);
            if y[i] > censor {
                let e = gamma * y[i] - xd;
                for j in 0..k {
                    g[j] += e * xi[j];
                }
                g[k] += 1.0 / gamma - e * y[i];
                for a in 0..k {
                    for b in 0..k {
                        h[(a, b)] -= xi[a] * xi[b];
                    }
                    h[(a, k)] += xi[a] * y[i];
                    h[(k, a)] += xi[a] * y[i];
                }
                h[(k, k)] += -1.0 / (gamma * gamma) - y[i] * y[i];
            } else {
                let z = gamma * censor - xd;
                let lam = mills(z);
                let lam_p = -z * lam - lam * lam; // λ'(z), negative
                for j in 0..k {
                    g[j] += -lam * xi[j];
                }
                g[k] += lam * censor;
                for a in 0..k {
                    for b in 0..k {
                        h[(a, b)] += lam_p * xi[a] * xi[b];
                    }
                    h[(a, k)] -= lam_p * censor * xi[a];
                    h[(k, a)] -= lam_p * censor * xi[a];
                }
                h[(k, k)] += lam_p * censor * censor;
            }
        }
        let step = (-h.clone())
            .cholesky()
            .map(|ch| ch.solve(&g))
            .or_else(|| (-h.clone()).try_inverse().map(|inv| inv * &g))
            .ok_or(Error::EstimatorNoConvergence { iterations, last_change })?;

        // Backtracking line search; keep γ positive.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let delta_new = &delta + step.rows(0, k) * scale;
            let gamma_new = gamma + step[k] * scale;
            if gamma_new > 1e-10 {
                let ll_new = loglik(&delta_new, gamma_new);
                if ll_new >= ll - 1e-12 * (1.0 + ll.abs()) {
                    last_change = (ll_new - ll).abs();
                    delta = delta_new;
                    gamma = gamma_new;
                    ll = ll_new;
                    accepted = true;
                    break;
                }
            }
            scale /= 2.0;
        }
        trace.push(ll);
        if !accepted || g.norm() < TOBIT_TOL * (1.0 + ll.abs()) || last_change < TOBIT_TOL * (1.0 + ll.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::EstimatorNoConvergence { iterations, last_change });
    }

    let sigma = 1.0 / gamma;
    let beta: Vec<f64> = delta.iter().map(|&d| d * sigma).collect();

    // Covariance in (δ, γ) via sandwich on per-row scores, transformed to β
    // by the delta method: β = δ/γ.
    let mut scores = DMatrix::zeros(n, k + 1);
    for i in 0..n {
        let xd: f64 = (0..k).map(|j| xm[(i, j)] * delta[j]).sum();
        if y[i] > censor {
            let e = gamma * y[i] - xd;
            for j in 0..k {
                scores[(i, j)] = e * xm[(i, j)];
            }
            scores[(i, k)] = 1.0 / gamma - e * y[i];
        } else {
            let z = gamma * censor - xd;
            let lam = mills(z);
            for j in 0..k {
                scores[(i, j)] = -lam * xm[(i, j)];
            }
            scores[(i, k)] = lam * censor;
        }
    }
    // Recompute the Hessian at the optimum for the bread.
    let info = {
        let mut h = DMatrix::zeros(k + 1, k + 1);
        for i in 0..n {
            let xi = DVector::from_fn(k, |j, _| xm[(i, j)]);
            if y[i] > censor {
                for a in 0..k {
                    for b in 0..k {
                        h[(a, b)] += xi[a] * xi[b];
                    }
                    h[(a, k)] -= xi[a] * y[i];
                    h[(k, a)] -= xi[a] * y[i];
                }
                h[(k, k)] += 1.0 / (gamma * gamma) + y[i] * y[i];
            } else {
                let z = gamma * censor - xi.dot(&delta);
                let lam = mills(z);
                let lam_p = -z * lam - lam * lam;
                for a in 0..k {
                    for b in 0..k {
                        h[(a, b)] -= lam_p * xi[a] * xi[b];
                    }
                    h[(a, k)] += lam_p * censor * xi[a];
                    h[(k, a)] += lam_p * censor * xi[a];
                }
                h[(k, k)] -= lam_p * censor * censor;
            }
        }
        h
    };
    let bread = info
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(x.names.clone()))?;
    let (v_olsen, n_clusters) = sandwich(&bread, &scores, cluster)?;

    // Jacobian of (β, σ) wrt (δ, γ).
    let mut jac = DMatrix::zeros(k + 1, k + 1);
    for j in 0..k {
        jac[(j, j)] = sigma;
        jac[(j, k)] = -delta[j] * sigma * sigma;
    }
    jac[(k, k)] = -sigma * sigma;
    let v_full = &jac * v_olsen * jac.transpose();
    let vcov = v_full.view((0, 0), (k, k)).into_owned();

    // Pseudo R²: 1 − ll/ll0 with an intercept-plus-scale null.
    let ll0 = null_tobit_loglik(y, censor);
    let pseudo_r2 = if ll0 != 0.0 { 1.0 - ll / ll0 } else { 0.0 };

    Ok(LikelihoodFit {
        names: x.names.clone(),
        coef: beta,
        vcov: matrix_to_rows(&vcov),
        log_likelihood: ll,
        pseudo_r_squared: pseudo_r2,
        sigma: Some(sigma),
        converged,
        iterations,
        n_obs: n,
        estimator: "tobit".to_string(),
        n_clusters,
        dropped,
        trace,
    })
}

/// Maximized intercept-only censored-normal log-likelihood (coarse grid +
/// golden refinement over (μ, σ)); the null for the Tobit pseudo R².
fn null_tobit_loglik(y: &[f64], censor: f64) -> f64 {
    let n = y.len();
    let uncens: Vec<f64> = y.iter().copied().filter(|&v| v > censor).collect();
    let mu0 = uncens.iter().sum::<f64>() / uncens.len().max(1) as f64;
    let s0 = (uncens.iter().map(|v| (v - mu0).powi(2)).sum::<f64>()
        / uncens.len().max(1) as f64)
        .sqrt()
        .max(1e-6);
    let normal = std_normal();
    let ll = |mu: f64, s: f64| -> f64 {
        (0..n)
            .map(|i| {
                if y[i] > censor {
                    -s.ln() + normal.pdf((y[i] - mu) / s).max(f64::MIN_POSITIVE).ln()
                } else {
                    ln_cdf((censor - mu) / s)
                }
            })
            .sum()
    };
    let mut best = ll(mu0, s0);
    for dm in -20..=20 {
        for ds in -10..=20 {
            let v = ll(mu0 + dm as f64 * 0.1 * s0, s0 * (1.0 + ds as f64 * 0.1));
            if v > best {
                best = v;
            }
        }
    }
    best
}

/// Average marginal effect of one regressor on the censored expectation
/// E[y|x] = Φ(z)·x'β + σφ(z), z = (x'β − censor)/σ, so
/// ∂E/∂x_j = β_j·Φ(z) averaged over sample rows.
pub fn tobit_ame_censored(fit: &LikelihoodFit, x: &Design, target: &str, censor: f64) -> f64 {
    let j = fit.names.iter().position(|n| n == target).expect("target regressor not in fit");
    let sigma = fit.sigma.expect("tobit fit carries sigma");
    tobit_ame_at(fit, x, j, sigma, censor)
}

fn tobit_ame_at(fit: &LikelihoodFit, x: &Design, j: usize, sigma: f64, censor: f64) -> f64 {
    let n = x.n_rows();
    let normal = std_normal();
    let mean_cdf: f64 = (0..n)
        .map(|i| {
            let xb: f64 = (0..fit.coef.len()).map(|c| x.cols[c][i] * fit.coef[c]).sum();
            normal.cdf((xb - censor) / sigma)
        })
        .sum::<f64>()
        / n as f64;
    fit.coef[j] * mean_cdf
}

/// Probit log-likelihood and analytic score in β, exposed for
/// finite-difference checks.
pub fn probit_loglik_grad(y: &[f64], x: &DMatrix<f64>, beta: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    let k = x.ncols();
    let mut ll = 0.0;
    let mut grad = vec![0.0; k];
    for i in 0..n {
        let xb: f64 = (0..k).map(|j| x[(i, j)] * beta[j]).sum();
        if y[i] > 0.5 {
            ll += ln_cdf(xb);
            let s = mills(xb);
            for j in 0..k {
                grad[j] += s * x[(i, j)];
            }
        } else {
            ll += ln_cdf(-xb);
            let s = -mills(-xb);
            for j in 0..k {
                grad[j] += s * x[(i, j)];
            }
        }
    }
    (ll, grad)
}

const PROBIT_TOL: f64 = 1e-10;
const PROBIT_MAX_ITER: usize = 100;

/// Probit MLE by Fisher scoring with line search.
pub fn fit_probit(
    y: &[f64],
    x: &Design,
    cluster: Option<&ClusterKey>,
) -> Result<LikelihoodFit> {
    let n = y.len();
    assert_eq!(x.n_rows(), n);
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidConfig("probit outcome must be 0/1".into()));
    }
    let ones = y.iter().filter(|&&v| v > 0.5).count();
    if ones == 0 || ones == n {
        return Err(Error::NoVariation);
    }
    let event: Vec<bool> = y.iter().map(|&v| v > 0.5).collect();
    if let Some(name) = separation_check(x, &event) {
        return Err(Error::Separation(name));
    }
    let (x, dropped) = screen_design(x, None)?;
    let x = &x;
    let k = x.n_cols();

    let xm = x.to_matrix();
    let normal = std_normal();
    let mut beta = vec![0.0; k];
    let (mut ll, mut grad) = probit_loglik_grad(y, &xm, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;

    for iter in 0..PROBIT_MAX_ITER {
        iterations = iter + 1;
        // Fisher information: Σ x x' φ²/(Φ(1−Φ)).
        let mut info = DMatrix::zeros(k, k);
        for i in 0..n {
            let xb: f64 = (0..k).map(|j| xm[(i, j)] * beta[j]).sum();
            let p = normal.cdf(xb).clamp(1e-10, 1.0 - 1e-10);
            let w = normal.pdf(xb).powi(2) / (p * (1.0 - p));
            for a in 0..k {
                for b in 0..k {
                    info[(a, b)] += w * xm[(i, a)] * xm[(i, b)];
                }
            }
        }
        let g = DVector::from_column_slice(&grad);
        let step = info
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&g))
            .ok_or_else(|| Error::RankDeficient(x.names.clone()))?;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = (0..k).map(|j| beta[j] + scale * step[j]).collect();
            let (ll_new, grad_new) = probit_loglik_grad(y, &xm, &cand);
            if ll_new >= ll - 1e-12 * (1.0 + ll.abs()) {
                last_change = (ll_new - ll).abs();
                beta = cand;
                ll = ll_new;
                grad = grad_new;
                accepted = true;
                break;
            }
            scale /= 2.0;
        }
        trace.push(ll);
        let gnorm = grad.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if !accepted || gnorm < PROBIT_TOL * (1.0 + ll.abs()) || last_change < PROBIT_TOL * (1.0 + ll.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::EstimatorNoConvergence { iterations, last_change });
    }

    // Sandwich: bread = inverse Fisher information at the optimum.
    let mut info = DMatrix::zeros(k, k);
    let mut scores = DMatrix::zeros(n, k);
    for i in 0..n {
        let xb: f64 = (0..k).map(|j| xm[(i, j)] * beta[j]).sum();
        let p = normal.cdf(xb).clamp(1e-10, 1.0 - 1e-10);
        let w = normal.pdf(xb).powi(2) / (p * (1.0 - p));
        let s = if y[i] > 0.5 { mills(xb) } else { -mills(-xb) };
        for a in 0..k {
            scores[(i, a)] = s * xm[(i, a)];
            for b in 0..k {
                info[(a, b)] += w * xm[(i, a)] * xm[(i, b)];
            }
        }
    }
    let bread = info
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(x.names.clone()))?;
    let (vcov, n_clusters) = sandwich(&bread, &scores, cluster)?;

    let p1 = ones as f64 / n as f64;
    let ll0 = (ones as f64) * p1.ln() + (n - ones) as f64 * (1.0 - p1).ln();
    let pseudo_r2 = 1.0 - ll / ll0;

    Ok(LikelihoodFit {
        names: x.names.clone(),
        coef: beta,
        vcov: matrix_to_rows(&vcov),
        log_likelihood: ll,
        pseudo_r_squared: pseudo_r2,
        sigma: None,
        converged,
        iterations,
        n_obs: n,
        estimator: "probit".to_string(),
        n_clusters,
        dropped,
        trace,
    })
}

/// Average marginal effects for a Probit fit with delta-method standard
/// errors: AME_j = mean_i φ(x_i'β)·β_j.
pub fn probit_ame(fit: &LikelihoodFit, x: &Design) -> IndexMap<String, (f64, f64)> {
    let n = x.n_rows();
    let k = fit.coef.len();
    let normal = std_normal();
    let xb: Vec<f64> = (0..n)
        .map(|i| (0..k).map(|j| x.cols[j][i] * fit.coef[j]).sum())
        .collect();
    let phis: Vec<f64> = xb.iter().map(|&v| normal.pdf(v)).collect();
    let mean_phi = phis.iter().sum::<f64>() / n as f64;
    let v = fit.vcov.clone();
    let mut out = IndexMap::new();
    for j in 0..k {
        let ame = fit.coef[j] * mean_phi;
        // Gradient of AME_j wrt β: mean[ φ e_j + β_j φ'(xb) x ], φ' = −xb·φ.
        let mut g = vec![0.0; k];
        for i in 0..n {
            for a in 0..k {
                let mut gi = if a == j { phis[i] } else { 0.0 };
                gi += fit.coef[j] * (-xb[i] * phis[i]) * x.cols[a][i];
                g[a] += gi / n as f64;
            }
        }
        let mut var = 0.0;
        for a in 0..k {
            for b in 0..k {
                var += g[a] * v[a][b] * g[b];
            }
        }
        out.insert(fit.names[j].clone(), (ame, var.max(0.0).sqrt()));
    }
    out
}
