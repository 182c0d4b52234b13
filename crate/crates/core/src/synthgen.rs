//! Ground-truth synthetic panel generators used to validate the estimation
//! pipeline. All generators are pure functions of (config, seed).

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, YearMonth};

/// Configuration for the grouped-slope panel generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupedDgp {
    pub n_units: usize,
    pub n_periods: usize,
    /// Per-group slope vectors; the number of regressors is the row width.
    pub group_slopes: Vec<Vec<f64>>,
    /// Must sum to 1.
    pub group_proportions: Vec<f64>,
    pub noise_sigma: f64,
    /// Std dev of the per-unit intercept γ_i.
    pub unit_fe_sigma: f64,
    /// Amplitude of the per-(unit, calendar-month) effects μ_{i,m}.
    pub month_fe_amplitude: f64,
    pub start: YearMonth,
    pub seed: u64,
}

impl Default for GroupedDgp {
    fn default() -> Self {
        Self {
            n_units: 100,
            n_periods: 72,
            group_slopes: vec![vec![1.0], vec![-1.0]],
            group_proportions: vec![0.5, 0.5],
            noise_sigma: 0.1,
            unit_fe_sigma: 0.5,
            month_fe_amplitude: 0.3,
            start: YearMonth::new(2015, 1),
            seed: 0,
        }
    }
}

fn unit_name(i: usize, n: usize) -> String {
    let width = (n.max(2) as f64).log10().ceil() as usize + 1;
    format!("u{i:0width$}")
}

/// Deterministic group sizes from proportions: cumulative rounding keeps
/// every count within ±1 of N·proportion.
pub fn group_counts(n: usize, proportions: &[f64]) -> Vec<usize> {
    let mut counts = Vec::with_capacity(proportions.len());
    let mut cum = 0.0;
    let mut assigned = 0usize;
    for &p in proportions {
        cum += p;
        let upto = (cum * n as f64).round() as usize;
        counts.push(upto.min(n) - assigned);
        assigned = upto.min(n);
    }
    counts
}

/// Generate a grouped-slope panel y_it = x_it'β_{g(i)} + γ_i + μ_{i,m(t)} + ε_it
/// together with the true group labels.
pub fn generate_grouped_panel(cfg: &GroupedDgp) -> Result<(PanelDataset, Vec<usize>)> {
    let k = cfg.group_slopes.len();
    if k == 0 || k > cfg.n_units {
        return Err(Error::InvalidConfig("need 1 <= K_true <= N".into()));
    }
    let psum: f64 = cfg.group_proportions.iter().sum();
    if (psum - 1.0).abs() > 1e-9 || cfg.group_proportions.len() != k {
        return Err(Error::InvalidConfig("group proportions must sum to 1".into()));
    }
    let p = cfg.group_slopes[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();

    let counts = group_counts(cfg.n_units, &cfg.group_proportions);
    let mut labels = Vec::with_capacity(cfg.n_units);
    for (g, &c) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(g, c));
    }
    labels.resize(cfg.n_units, k - 1);

    let n_rows = cfg.n_units * cfg.n_periods;
    let mut unit = Vec::with_capacity(n_rows);
    let mut ym = Vec::with_capacity(n_rows);
    let mut y = Vec::with_capacity(n_rows);
    let mut xs: Vec<Vec<f64>> = vec![Vec::with_capacity(n_rows); p];

    for i in 0..cfg.n_units {
        let gamma_i = rng.random_range(-1.0..1.0) * cfg.unit_fe_sigma;
        let month_fe: Vec<f64> =
            (0..12).map(|_| rng.random_range(-1.0..1.0) * cfg.month_fe_amplitude).collect();
        let beta = &cfg.group_slopes[labels[i]];
        for t in 0..cfg.n_periods {
            let months = cfg.start.month as usize - 1 + t;
            let cal = YearMonth::new(
                cfg.start.year + (months / 12) as i32,
                (months % 12 + 1) as u32,
            );
            unit.push(unit_name(i, cfg.n_units));
            ym.push(cal);
            let x_row: Vec<f64> = (0..p).map(|_| rng.random_range(-1.732..1.732)).collect();
            let mut v = gamma_i + month_fe[(cal.month - 1) as usize];
            for j in 0..p {
                v += x_row[j] * beta[j];
                xs[j].push(x_row[j]);
            }
            if cfg.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            y.push(v);
        }
    }

    let mut columns = IndexMap::new();
    columns.insert("y".to_string(), y);
    for j in 0..p {
        columns.insert(format!("x{}", j + 1), xs[j].clone());
    }
    let data = PanelDataset::from_rows(unit, None, ym, columns)?;
    Ok((data, labels))
}

/// Configuration for the stacked-region triple-difference generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DddDgp {
    pub n_units: usize,
    pub n_periods: usize,
    pub regions: Vec<String>,
    /// Region receiving the treatment effect.
    pub focal_region: String,
    pub n_treated: usize,
    pub event: YearMonth,
    pub start: YearMonth,
    /// Level effect δ on (treated, focal, post) cells, in log points.
    pub effect_level: f64,
    /// Additional per-month trend effect reaching this value at `trend_horizon`
    /// months after the event.
    pub effect_trend: f64,
    pub trend_horizon: usize,
    /// Baseline log intensity.
    pub baseline: f64,
    /// Std dev of the (unit, region) intercepts.
    pub unit_fe_sigma: f64,
    /// Amplitude of the per-(unit-region, calendar-month) effects.
    pub month_fe_amplitude: f64,
    /// Slope of a common linear time trend in log points over the full sample.
    pub common_trend: f64,
    /// Shock added to every region on (treated, post) cells; removed by the
    /// triple difference.
    pub common_post_shock: f64,
    /// Poisson counts when true; Gaussian log-outcome noise otherwise.
    pub poisson_outcome: bool,
    /// Noise σ for the continuous mode.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DddDgp {
    fn default() -> Self {
        Self {
            n_units: 40,
            n_periods: 72,
            regions: vec!["EU".to_string(), "US".to_string()],
            focal_region: "US".to_string(),
            n_treated: 12,
            event: YearMonth::new(2018, 1),
            start: YearMonth::new(2015, 1),
            effect_level: -0.438,
            effect_trend: 0.0,
            trend_horizon: 20,
            baseline: 2.0,
            unit_fe_sigma: 0.4,
            month_fe_amplitude: 0.3,
            common_trend: 0.0,
            common_post_shock: 0.0,
            poisson_outcome: true,
            noise_sigma: 0.2,
            seed: 0,
        }
    }
}

/// Generate a stacked region panel with a known treated set; the outcome
/// column is `Sq` and the treatment flag column `Courtyard`.
pub fn generate_ddd_panel(cfg: &DddDgp) -> Result<(PanelDataset, Vec<bool>)> {
    if cfg.n_treated > cfg.n_units {
        return Err(Error::TooManyTreated {
            requested: cfg.n_treated,
            available: cfg.n_units,
        });
    }
    if !cfg.regions.contains(&cfg.focal_region) {
        return Err(Error::InvalidConfig("focal region not in region list".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();

    // Treated set: deterministic draw without replacement.
    let mut treated = vec![false; cfg.n_units];
    {
        let mut pool: Vec<usize> = (0..cfg.n_units).collect();
        for d in 0..cfg.n_treated {
            let j = rng.random_range(d..pool.len());
            pool.swap(d, j);
        }
        for &i in pool.iter().take(cfg.n_treated) {
            treated[i] = true;
        }
    }

    let months_of = |t: usize| -> YearMonth {
        let months = cfg.start.month as usize - 1 + t;
        YearMonth::new(cfg.start.year + (months / 12) as i32, (months % 12 + 1) as u32)
    };
    let t_event = (0..cfg.n_periods)
        .find(|&t| months_of(t) == cfg.event)
        .ok_or_else(|| Error::EventOutsideSample(cfg.event.to_string()))?;

    let mut regions_sorted = cfg.regions.clone();
    regions_sorted.sort();

    let n_rows = cfg.n_units * regions_sorted.len() * cfg.n_periods;
    let mut unit = Vec::with_capacity(n_rows);
    let mut region = Vec::with_capacity(n_rows);
    let mut ym = Vec::with_capacity(n_rows);
    let mut sq = Vec::with_capacity(n_rows);
    let mut courtyard = Vec::with_capacity(n_rows);

    for i in 0..cfg.n_units {
        for r in &regions_sorted {
            let fe_ir = rng.random_range(-1.0..1.0) * cfg.unit_fe_sigma;
            let month_fe: Vec<f64> = (0..12)
                .map(|_| rng.random_range(-1.0..1.0) * cfg.month_fe_amplitude)
                .collect();
            for t in 0..cfg.n_periods {
                let cal = months_of(t);
                unit.push(unit_name(i, cfg.n_units));
                region.push(r.clone());
                ym.push(cal);
                courtyard.push(if treated[i] { 1.0 } else { 0.0 });

                let post = t >= t_event;
                let mut log_mu = cfg.baseline
                    + fe_ir
                    + month_fe[(cal.month - 1) as usize]
                    + cfg.common_trend * (t as f64 - cfg.n_periods as f64 / 2.0)
                        / cfg.n_periods as f64;
                if post && treated[i] {
                    log_mu += cfg.common_post_shock;
                    if *r == cfg.focal_region {
                        log_mu += cfg.effect_level;
                        if cfg.effect_trend != 0.0 {
                            let s = (t - t_event).min(cfg.trend_horizon) as f64;
                            log_mu +=
                                cfg.effect_trend * s / cfg.trend_horizon.max(1) as f64;
                        }
                    }
                }
                let v = if cfg.poisson_outcome {
                    let lambda = log_mu.exp().clamp(1e-12, 1e9);
                    Poisson::new(lambda).unwrap().sample(&mut rng)
                } else {
                    log_mu + noise.sample(&mut rng)
                };
                sq.push(v);
            }
        }
    }

    let mut columns = IndexMap::new();
    columns.insert("Sq".to_string(), sq);
    columns.insert("Courtyard".to_string(), courtyard);
    let data = PanelDataset::from_rows(unit, Some(region), ym, columns)?;
    Ok((data, treated))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = GroupedDgp { n_units: 10, n_periods: 24, ..Default::default() };
        let (a, la) = generate_grouped_panel(&cfg).unwrap();
        let (b, lb) = generate_grouped_panel(&cfg).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.column("y").unwrap(), b.column("y").unwrap());
    }

    #[test]
    fn proportions_counts_within_one() {
        let counts = group_counts(1000, &[0.5, 0.3, 0.2]);
        assert!((counts[0] as i64 - 500).abs() <= 1);
        assert!((counts[1] as i64 - 300).abs() <= 1);
        assert!((counts[2] as i64 - 200).abs() <= 1);
        assert_eq!(counts.iter().sum::<usize>(), 1000);
    }

    #[test]
    fn noiseless_panel_identifies_groups() {
        let cfg = GroupedDgp {
            n_units: 12,
            n_periods: 24,
            noise_sigma: 0.0,
            group_slopes: vec![vec![2.0], vec![-2.0]],
            group_proportions: vec![0.5, 0.5],
            ..Default::default()
        };
        let (data, labels) = generate_grouped_panel(&cfg).unwrap();
        // Per-unit OLS on demeaned data recovers the slopes exactly.
        let t = cfg.n_periods;
        let y = data.column("y").unwrap();
        let x = data.column("x1").unwrap();
        for i in 0..cfg.n_units {
            let rows = i * t..(i + 1) * t;
            let ybar: f64 = y[rows.clone()].iter().sum::<f64>() / t as f64;
            let xbar: f64 = x[rows.clone()].iter().sum::<f64>() / t as f64;
            let sxy: f64 = rows
                .clone()
                .map(|r| (x[r] - xbar) * (y[r] - ybar))
                .sum();
            let sxx: f64 = rows.clone().map(|r| (x[r] - xbar) * (x[r] - xbar)).sum();
            let slope = sxy / sxx;
            let expect = cfg.group_slopes[labels[i]][0];
            // Month FE perturbs the slope only through correlation with x,
            // which is zero by construction up to demeaning error.
            assert!((slope - expect).abs() < 0.3, "unit {i}: {slope} vs {expect}");
        }
    }

    #[test]
    fn ddd_panel_is_balanced_and_deterministic() {
        let cfg = DddDgp {
            n_units: 6,
            n_periods: 24,
            n_treated: 2,
            event: YearMonth::new(2016, 1),
            ..Default::default()
        };
        let (a, ta) = generate_ddd_panel(&cfg).unwrap();
        let (b, tb) = generate_ddd_panel(&cfg).unwrap();
        assert_eq!(a.n_rows(), 6 * 2 * 24);
        assert_eq!(ta, tb);
        assert_eq!(a.column("Sq").unwrap(), b.column("Sq").unwrap());
        assert_eq!(ta.iter().filter(|&&x| x).count(), cfg.n_treated);
    }
}
