//! Classifier-Lasso penalized least squares: estimate group-heterogeneous
//! slopes, assign units to latent groups, and re-estimate by post-Lasso
//! grouped regression.
//!
//! The objective is
//!
//! ```text
//! (1/NT) Σ_i Σ_t (y_it − x_it'β_i)²  +  (λ/N) Σ_i P(β_i; α_1..α_K)
//! ```
//!
//! with penalty scale `λ = c · Var(y) · T^(−1/3)` and, by default, the
//! multiplicative classifier penalty `P = Π_k ‖β_i − α_k‖` that shrinks each
//! unit toward its nearest centroid. The additive form `Σ_k ‖β_i − α_k‖²`
//! is available for comparison; it pulls every unit toward all centroids and
//! does not classify.
//!
//! The solver is block-coordinate descent with per-update line searches, so
//! the objective is non-increasing at every iteration by construction.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{within_transform, ClusterKey, FixedEffectSpec, PanelDataset, Partition};
use crate::regress::{ols_fit, Design, RegressionFit};

/// Penalty form. `Product` is the classifier penalty; `Additive` is the
/// squared-distance sum exposed for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyForm {
    Product,
    Additive,
}

/// Tuning parameters for the penalized group estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassoConfig {
    /// Maximum number of groups.
    pub k: usize,
    /// Penalty importance; 0 degenerates to per-unit OLS.
    pub c: f64,
    /// Centroid convergence tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub penalty: PenaltyForm,
}

impl Default for ClassoConfig {
    fn default() -> Self {
        Self {
            k: 3,
            c: 0.25,
            tol: 1e-6,
            max_iter: 500,
            seed: 0,
            penalty: PenaltyForm::Product,
        }
    }
}

/// Outcome, regressors, and fixed effects for the group regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassoSpec {
    pub outcome: String,
    pub regressors: Vec<String>,
    pub fe: FixedEffectSpec,
}

/// Result of the penalized group fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassoFit {
    pub config: ClassoConfig,
    /// Per-unit slopes, N × p.
    pub beta: Vec<Vec<f64>>,
    /// Group centroids, K × p. Empty groups carry NaN entries.
    pub alpha: Vec<Vec<f64>>,
    /// Group index per unit, 0-based.
    pub assignment: Vec<usize>,
    /// Objective value after each iteration (non-increasing).
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Groups with no assigned unit, 0-based.
    pub empty_groups: Vec<usize>,
    pub penalty_weight: f64,
}

impl ClassoFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Nearest-centroid assignment in Euclidean norm; ties go to the lowest
/// group index. Centroids with NaN entries are skipped.
pub fn assign_groups(beta: &[Vec<f64>], alpha: &[Vec<f64>]) -> Vec<usize> {
    beta.iter()
        .map(|b| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (k, a) in alpha.iter().enumerate() {
                let d: f64 = b.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
                if d.is_finite() && d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means++ initialization followed by Lloyd iterations.
fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let p = points[0].len();
    let k = k.min(n);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|pt| centers.iter().map(|c| sq_dist(pt, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        };
        centers.push(points[next].clone());
    }
    for _ in 0..25 {
        let assign = assign_groups(points, &centers);
        let mut sums = vec![vec![0.0; p]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (pt, &g) in points.iter().zip(&assign) {
            counts[g] += 1;
            for j in 0..p {
                sums[g][j] += pt[j];
            }
        }
        let mut moved = 0.0f64;
        for g in 0..centers.len() {
            if counts[g] > 0 {
                for j in 0..p {
                    sums[g][j] /= counts[g] as f64;
                }
                moved = moved.max(sq_dist(&centers[g], &sums[g]));
                centers[g] = sums[g].clone();
            }
        }
        if moved < 1e-18 {
            break;
        }
    }
    centers
}

/// Per-unit blocks of the within-transformed data.
struct UnitBlocks {
    /// X'X per unit, scaled 2/T.
    a: Vec<DMatrix<f64>>,
    /// X'y per unit, scaled 2/T.
    b: Vec<DVector<f64>>,
    /// Σ_t y² per unit (for objective evaluation).
    yy: Vec<f64>,
    t: usize,
}

impl UnitBlocks {
    /// Sum of squared residuals for unit `i` at slopes `beta`.
    fn ssr(&self, i: usize, beta: &DVector<f64>) -> f64 {
        // ‖y−Xβ‖² = y'y − 2β'X'y + β'X'Xβ, with a = (2/T)X'X, b = (2/T)X'y.
        let t = self.t as f64;
        let quad = (beta.transpose() * &self.a[i] * beta)[(0, 0)] * t / 2.0;
        let lin = self.b[i].dot(beta) * t / 2.0;
        self.yy[i] - 2.0 * lin + quad
    }
}

fn penalty_value(beta: &DVector<f64>, alpha: &[DVector<f64>], form: PenaltyForm) -> f64 {
    match form {
        PenaltyForm::Product => {
            alpha.iter().map(|a| (beta - a).norm()).product()
        }
        PenaltyForm::Additive => alpha.iter().map(|a| (beta - a).norm_squared()).sum(),
    }
}

struct Objective<'a> {
    blocks: &'a UnitBlocks,
    lambda: f64,
    form: PenaltyForm,
    n: usize,
}

impl Objective<'_> {
    /// Per-unit contribution, scaled by N (so total objective = mean of these).
    fn unit(&self, i: usize, beta: &DVector<f64>, alpha: &[DVector<f64>]) -> f64 {
        let t = self.blocks.t as f64;
        self.blocks.ssr(i, beta) / t + self.lambda * penalty_value(beta, alpha, self.form)
    }

    fn total(&self, beta: &[DVector<f64>], alpha: &[DVector<f64>]) -> f64 {
        (0..self.n).map(|i| self.unit(i, &beta[i], alpha)).sum::<f64>() / self.n as f64
    }
}

/// Fit the penalized group estimator.
///
/// The data are within-transformed over `spec.fe` first; per-unit OLS seeds
/// the slopes and seeded k-means++ seeds the centroids.
pub fn fit_classo(
    data: &PanelDataset,
    spec: &ClassoSpec,
    cfg: &ClassoConfig,
) -> Result<ClassoFit> {
    if cfg.k < 1 || cfg.c < 0.0 || cfg.tol <= 0.0 {
        return Err(Error::InvalidConfig("require K >= 1, c >= 0, tol > 0".into()));
    }
    let mut cols: Vec<&str> = vec![spec.outcome.as_str()];
    cols.extend(spec.regressors.iter().map(|s| s.as_str()));
    let data = if spec.fe.factors.is_empty() {
        data.clone()
    } else {
        within_transform(data, &cols, &spec.fe)?
    };

    let n_cs = data.n_units() * data.n_regions();
    let t = data.n_periods();
    let p = spec.regressors.len();
    if t < p + 2 {
        return Err(Error::InvalidConfig(format!(
            "need T >= p+2 per unit (T={t}, p={p})"
        )));
    }

    let y = data.column(&spec.outcome)?.to_vec();
    let xs: Vec<&[f64]> =
        spec.regressors.iter().map(|r| data.column(r)).collect::<Result<_>>()?;

    // Pooled outcome variance on the within-transformed data.
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var_y = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64;
    let lambda = cfg.c * var_y / (t as f64).cbrt();

    // Per-unit cross products.
    let mut a = Vec::with_capacity(n_cs);
    let mut b = Vec::with_capacity(n_cs);
    let mut yy = Vec::with_capacity(n_cs);
    for i in 0..n_cs {
        let rows = i * t..(i + 1) * t;
        let xi = DMatrix::from_fn(t, p, |r, c| xs[c][rows.start + r]);
        let yi = DVector::from_fn(t, |r, _| y[rows.start + r]);
        a.push(xi.transpose() * &xi * (2.0 / t as f64));
        b.push(xi.transpose() * &yi * (2.0 / t as f64));
        yy.push(yi.norm_squared());
    }
    let blocks = UnitBlocks { a, b, yy, t };

    // Per-unit OLS initialization.
    let mut beta: Vec<DVector<f64>> = Vec::with_capacity(n_cs);
    for i in 0..n_cs {
        let sol = blocks.a[i]
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&blocks.b[i]))
            .or_else(|| blocks.a[i].clone().try_inverse().map(|inv| inv * &blocks.b[i]));
        match sol {
            Some(s) => beta.push(s),
            None => {
                return Err(Error::DegenerateUnit(unit_label(&data, i)));
            }
        }
    }
    let ols_beta = beta.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pts: Vec<Vec<f64>> = beta.iter().map(|v| v.iter().copied().collect()).collect();
    let mut alpha: Vec<DVector<f64>> = kmeans(&pts, cfg.k, &mut rng)
        .into_iter()
        .map(DVector::from_vec)
        .collect();
    while alpha.len() < cfg.k {
        // More groups requested than distinct seeds available.
        let dup = alpha[alpha.len() % alpha.len().max(1)].clone();
        alpha.push(dup);
    }

    let obj = Objective { blocks: &blocks, lambda, form: cfg.penalty, n: n_cs };
    let mut trace = vec![obj.total(&beta, &alpha)];
    let mut converged = false;
    let mut iterations = 0;

    if lambda > 0.0 {
        for iter in 0..cfg.max_iter {
            iterations = iter + 1;
            let alpha_prev = alpha.clone();

            for i in 0..n_cs {
                let cand = beta_candidate(&blocks, i, &alpha, lambda, cfg.penalty, &beta[i]);
                beta[i] = line_search(&obj, i, &beta[i], cand, &alpha);
            }

            for k in 0..cfg.k {
                alpha[k] = centroid_update(&beta, &alpha, k, cfg.penalty, &obj);
            }

            trace.push(obj.total(&beta, &alpha));
            let moved = alpha
                .iter()
                .zip(&alpha_prev)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            if moved < cfg.tol {
                converged = true;
                break;
            }
        }
    } else {
        beta = ols_beta;
        converged = true;
    }

    let beta_rows: Vec<Vec<f64>> = beta.iter().map(|v| v.iter().copied().collect()).collect();
    let alpha_rows: Vec<Vec<f64>> = alpha.iter().map(|v| v.iter().copied().collect()).collect();
    let assignment = assign_groups(&beta_rows, &alpha_rows);
    let mut empty_groups = Vec::new();
    let mut alpha_out = alpha_rows;
    for k in 0..cfg.k {
        if !assignment.contains(&k) {
            empty_groups.push(k);
            alpha_out[k] = vec![f64::NAN; p];
        }
    }

    Ok(ClassoFit {
        config: cfg.clone(),
        beta: beta_rows,
        alpha: alpha_out,
        assignment,
        objective_trace: trace,
        converged,
        iterations,
        empty_groups,
        penalty_weight: lambda,
    })
}

fn unit_label(data: &PanelDataset, cs: usize) -> String {
    let nr = data.n_regions();
    let u = &data.units()[cs / nr];
    if data.has_regions() {
        format!("{u}/{}", data.regions()[cs % nr])
    } else {
        u.clone()
    }
}

/// Candidate slope update for one unit. For the product penalty the
/// subproblem fixes the distances to all but the nearest centroid; for the
/// additive penalty the update is the exact closed form.
fn beta_candidate(
    blocks: &UnitBlocks,
    i: usize,
    alpha: &[DVector<f64>],
    lambda: f64,
    form: PenaltyForm,
    current: &DVector<f64>,
) -> DVector<f64> {
    let p = current.len();
    match form {
        PenaltyForm::Additive => {
            let k = alpha.len() as f64;
            let mut lhs = blocks.a[i].clone();
            for j in 0..p {
                lhs[(j, j)] += 2.0 * lambda * k;
            }
            let mut rhs = blocks.b[i].clone();
            for a in alpha {
                rhs += a * (2.0 * lambda);
            }
            lhs.cholesky().map(|ch| ch.solve(&rhs)).unwrap_or_else(|| current.clone())
        }
        PenaltyForm::Product => {
            // Nearest centroid and the product of the remaining distances.
            let mut k_star = 0usize;
            let mut best = f64::INFINITY;
            for (k, a) in alpha.iter().enumerate() {
                let d = (current - a).norm();
                if d < best {
                    best = d;
                    k_star = k;
                }
            }
            let w: f64 = alpha
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != k_star)
                .map(|(_, a)| (current - a).norm())
                .product();
            let target = &alpha[k_star];
            let mu = lambda * w;
            if mu <= 0.0 {
                return solve_ls(&blocks.a[i], &blocks.b[i], current);
            }
            // Subgradient check: the centroid itself is optimal when the
            // least-squares pull at the centroid is weaker than the penalty.
            let grad_at_target = &blocks.a[i] * target - &blocks.b[i];
            if grad_at_target.norm() <= mu {
                return target.clone();
            }
            // Fixed-point iteration on the distance to the centroid.
            let mut d = (current - target).norm().max(1e-10);
            let mut cand = current.clone();
            for _ in 0..40 {
                let mut lhs = blocks.a[i].clone();
                for j in 0..p {
                    lhs[(j, j)] += mu / d;
                }
                let rhs = &blocks.b[i] + target * (mu / d);
                cand = match lhs.cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => break,
                };
                let d_new = (&cand - target).norm().max(1e-12);
                if (d_new - d).abs() < 1e-12 * (1.0 + d) {
                    break;
                }
                d = d_new;
            }
            cand
        }
    }
}

fn solve_ls(a: &DMatrix<f64>, b: &DVector<f64>, fallback: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .cholesky()
        .map(|ch| ch.solve(b))
        .unwrap_or_else(|| fallback.clone())
}

/// Backtracking acceptance: halve toward the current point until the unit
/// objective does not increase. The current point is always admissible, so
/// the sweep objective is monotone.
fn line_search(
    obj: &Objective<'_>,
    i: usize,
    current: &DVector<f64>,
    candidate: DVector<f64>,
    alpha: &[DVector<f64>],
) -> DVector<f64> {
    let f_cur = obj.unit(i, current, alpha);
    let mut cand = candidate;
    for _ in 0..40 {
        if obj.unit(i, &cand, alpha) <= f_cur + 1e-14 * (1.0 + f_cur.abs()) {
            return cand;
        }
        cand = (&cand + current) / 2.0;
    }
    current.clone()
}

/// Centroid update holding slopes and the other centroids fixed. For the
/// product penalty this is a weighted geometric median (Weiszfeld steps,
/// accepted only on objective decrease); the additive form has the mean as
/// its closed-form minimizer.
fn centroid_update(
    beta: &[DVector<f64>],
    alpha: &[DVector<f64>],
    k: usize,
    form: PenaltyForm,
    obj: &Objective<'_>,
) -> DVector<f64> {
    let p = beta[0].len();
    match form {
        PenaltyForm::Additive => {
            let mut mean = DVector::zeros(p);
            for b in beta {
                mean += b;
            }
            mean / beta.len() as f64
        }
        PenaltyForm::Product => {
            let weights: Vec<f64> = beta
                .iter()
                .map(|b| {
                    alpha
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .map(|(_, a)| (b - a).norm())
                        .product()
                })
                .collect();
            let term = |a: &DVector<f64>| -> f64 {
                beta.iter().zip(&weights).map(|(b, w)| w * (b - a).norm()).sum()
            };
            let mut cur = alpha[k].clone();
            let mut f_cur = term(&cur);
            for _ in 0..60 {
                let mut num = DVector::zeros(p);
                let mut den = 0.0;
                let mut at_point = None;
                for (b, &w) in beta.iter().zip(&weights) {
                    if w <= 0.0 {
                        continue;
                    }
                    let d = (b - &cur).norm();
                    if d < 1e-12 {
                        at_point = Some(b.clone());
                        continue;
                    }
                    num += b * (w / d);
                    den += w / d;
                }
                if den <= 0.0 {
                    break;
                }
                let mut next = num / den;
                if let Some(pt) = at_point {
                    // Nudge off a coincident point to keep Weiszfeld defined.
                    next = (next + pt) / 2.0;
                }
                let f_next = term(&next);
                if f_next >= f_cur - 1e-15 * (1.0 + f_cur.abs()) {
                    break;
                }
                cur = next;
                f_cur = f_next;
            }
            let _ = obj;
            cur
        }
    }
}

/// Post-Lasso pooled regression: every slope interacted with group dummies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PostLassoFit {
    pub pooled: RegressionFit,
    pub groups: Vec<GroupCoefs>,
    pub empty_groups: Vec<usize>,
}

/// Coefficients for one group in the Table-2 layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupCoefs {
    /// 1-based group label.
    pub group: usize,
    pub n_units: usize,
    /// regressor → (coefficient, standard error).
    pub coefs: IndexMap<String, (f64, f64)>,
}

/// Pooled regression with all slopes interacted with group dummies, fixed
/// effects absorbed, and clustered standard errors.
pub fn post_lasso(
    data: &PanelDataset,
    assignment: &[usize],
    spec: &ClassoSpec,
    n_groups: usize,
    cluster: Option<&ClusterKey>,
) -> Result<PostLassoFit> {
    let n_cs = data.n_units() * data.n_regions();
    assert_eq!(assignment.len(), n_cs, "assignment must cover all units");
    let t = data.n_periods();

    let mut group_units = vec![0usize; n_groups];
    for &g in assignment {
        group_units[g] += 1;
    }
    let empty_groups: Vec<usize> =
        (0..n_groups).filter(|&g| group_units[g] == 0).collect();

    let mut design = Design::new();
    for g in 0..n_groups {
        if group_units[g] == 0 {
            continue;
        }
        for reg in &spec.regressors {
            let x = data.column(reg)?;
            let col: Vec<f64> = (0..data.n_rows())
                .map(|row| if assignment[row / t] == g { x[row] } else { 0.0 })
                .collect();
            design.push(format!("{reg}:Group{}", g + 1), col);
        }
    }
    let y = data.column(&spec.outcome)?;
    let partitions: Vec<Partition> =
        spec.fe.factors.iter().map(|&f| Partition::from_factor(data, f)).collect();
    let mut pooled = ols_fit(y, &design, None, Some(&partitions), cluster)?;
    pooled.estimator = "post-lasso".to_string();

    let mut groups = Vec::new();
    for g in 0..n_groups {
        if group_units[g] == 0 {
            continue;
        }
        let mut coefs = IndexMap::new();
        for reg in &spec.regressors {
            let name = format!("{reg}:Group{}", g + 1);
            if let (Some(c), Some(s)) = (pooled.coef_of(&name), pooled.se_of(&name)) {
                coefs.insert(reg.clone(), (c, s));
            }
        }
        groups.push(GroupCoefs { group: g + 1, n_units: group_units[g], coefs });
    }

    Ok(PostLassoFit { pooled, groups, empty_groups })
}

/// Rule for flagging treated ("courtyard") groups from post-Lasso output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CourtyardRule {
    /// Require |t| > 1.96 in addition to a negative coefficient.
    pub significant_only: bool,
    /// Minimum |coefficient| for a group to count as treated.
    pub min_magnitude: f64,
}

impl Default for CourtyardRule {
    fn default() -> Self {
        Self { significant_only: false, min_magnitude: 0.0 }
    }
}

/// Flag the units belonging to groups whose coefficient on `target` is
/// negative (optionally significant / large enough). Returns per-unit flags
/// and the 0-based treated group indices.
pub fn classify_courtyard(
    fit: &PostLassoFit,
    assignment: &[usize],
    target: &str,
    rule: &CourtyardRule,
) -> (Vec<bool>, Vec<usize>) {
    let mut treated_groups = Vec::new();
    for gc in &fit.groups {
        if let Some(&(coef, se)) = gc.coefs.get(target) {
            let mut hit = coef < 0.0 && coef.abs() >= rule.min_magnitude;
            if rule.significant_only {
                hit = hit && se > 0.0 && (coef / se).abs() > 1.96;
            }
            if hit {
                treated_groups.push(gc.group - 1);
            }
        }
    }
    let flags = assignment.iter().map(|g| treated_groups.contains(g)).collect();
    (flags, treated_groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assign_exact_centroid() {
        let alpha = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        let beta = vec![vec![1.0, 1.0]];
        assert_eq!(assign_groups(&beta, &alpha), vec![1]);
    }

    #[test]
    fn assign_tie_goes_to_lowest_index() {
        let alpha = vec![vec![-1.0], vec![5.0], vec![1.0]];
        let beta = vec![vec![0.0]];
        // Equidistant from groups 0 and 2 -> group 0.
        assert_eq!(assign_groups(&beta, &alpha), vec![0]);
    }

    #[test]
    fn assign_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alpha: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let beta: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let got = assign_groups(&beta, &alpha);
        for (i, b) in beta.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, a) in alpha.iter().enumerate() {
                let d = sq_dist(b, a);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            assert_eq!(got[i], best);
        }
    }

    #[test]
    fn courtyard_flags_negative_groups() {
        // Post coefs [-0.662, -0.099, 0.498] -> groups 0 and 1 flagged.
        let mk = |g: usize, c: f64| GroupCoefs {
            group: g,
            n_units: 1,
            coefs: IndexMap::from([("Post".to_string(), (c, 0.01))]),
        };
        let fit = PostLassoFit {
            pooled: RegressionFit {
                names: vec![],
                coef: vec![],
                vcov: vec![],
                n_obs: 0,
                dof_resid: 0,
                r_squared: 0.0,
                estimator: "post-lasso".into(),
                n_clusters: None,
                small_sample_factor: 1.0,
                dropped: vec![],
            },
            groups: vec![mk(1, -0.662), mk(2, -0.099), mk(3, 0.498)],
            empty_groups: vec![],
        };
        let assignment = vec![0, 1, 2, 0];
        let (flags, treated) =
            classify_courtyard(&fit, &assignment, "Post", &CourtyardRule::default());
        assert_eq!(treated, vec![0, 1]);
        assert_eq!(flags, vec![true, true, false, true]);
    }

    #[test]
    fn courtyard_no_negative_no_flags() {
        let mk = |g: usize, c: f64| GroupCoefs {
            group: g,
            n_units: 1,
            coefs: IndexMap::from([("Post".to_string(), (c, 0.01))]),
        };
        let fit = PostLassoFit {
            pooled: RegressionFit {
                names: vec![],
                coef: vec![],
                vcov: vec![],
                n_obs: 0,
                dof_resid: 0,
                r_squared: 0.0,
                estimator: "post-lasso".into(),
                n_clusters: None,
                small_sample_factor: 1.0,
                dropped: vec![],
            },
            groups: vec![mk(1, 0.2), mk(2, 0.1)],
            empty_groups: vec![],
        };
        let (flags, treated) =
            classify_courtyard(&fit, &[0, 1], "Post", &CourtyardRule::default());
        assert!(treated.is_empty());
        assert_eq!(flags, vec![false, false]);
    }
}
