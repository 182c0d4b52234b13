//! Design-matrix builders and estimators for the empirical models: grouped
//! event-study design, standard and progressive triple-differencing, and
//! the descriptive gap / TreatRatio indices.

use serde::{Deserialize, Serialize};

use crate::classo::ClassoSpec;
use crate::error::{Error, Result};
use crate::glm::{fit_ppml, fit_tobit, LikelihoodFit};
use crate::panel::{
    ClusterKey, Factor, FixedEffectSpec, MonthStyle, PanelDataset, Partition, YearMonth,
};
use crate::regress::{ols_fit, wald_joint, Design, RegressionFit};

/// Which estimator backs a triple-difference fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ols,
    Ppml,
    Tobit,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Ols => write!(f, "ols"),
            Estimator::Ppml => write!(f, "ppml"),
            Estimator::Tobit => write!(f, "tobit"),
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ols" => Ok(Estimator::Ols),
            "ppml" => Ok(Estimator::Ppml),
            "tobit" => Ok(Estimator::Tobit),
            other => Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Event-study configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventConfig {
    /// Calendar month of the event.
    pub event: YearMonth,
    pub leads: usize,
    pub lags: usize,
    /// Column holding the per-unit treatment flag (0/1).
    pub treat_col: String,
    /// Region label of the focal region.
    pub focal_region: String,
    pub month_style: MonthStyle,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            event: YearMonth::new(2018, 1),
            leads: 20,
            lags: 20,
            treat_col: "Courtyard".to_string(),
            focal_region: "US".to_string(),
            month_style: MonthStyle::Calendar,
        }
    }
}

/// Post_t indicator (1 from the event month onward). Returns the column and
/// whether the design is degenerate (event at the sample start: no pre
/// period).
pub fn post_indicator(data: &PanelDataset, cfg: &EventConfig) -> Result<(Vec<f64>, bool)> {
    let t_event = data
        .time_of(cfg.event)
        .ok_or_else(|| Error::EventOutsideSample(cfg.event.to_string()))?;
    let col = (0..data.n_rows())
        .map(|row| if data.row_time(row) >= t_event { 1.0 } else { 0.0 })
        .collect();
    Ok((col, t_event == 0))
}

/// Build the grouped event-study design: outcome ln(1+USSq), regressors
/// Post, log1p counterfactual volume, and a centered linear trend, with
/// unit × month fixed effects.
///
/// Returns the augmented dataset plus the matching [`ClassoSpec`].
pub fn build_grouped_eventstudy(
    data: &PanelDataset,
    outcome_col: &str,
    counter_col: &str,
    cfg: &EventConfig,
) -> Result<(PanelDataset, ClassoSpec)> {
    let (post, _degenerate) = post_indicator(data, cfg)?;
    let ln_outcome = data.log1p_col(outcome_col)?;
    let ln_counter = data.log1p_col(counter_col)?;
    let t_mid = (data.n_periods() as f64 - 1.0) / 2.0;
    let trend: Vec<f64> =
        (0..data.n_rows()).map(|row| data.row_time(row) as f64 - t_mid).collect();

    let out = data
        .with_column("lnOutcome", ln_outcome)
        .with_column("Post", post)
        .with_column("CounterSq", ln_counter)
        .with_column("Trend", trend);

    let fe = if out.has_regions() {
        FixedEffectSpec::demean(vec![Factor::UnitRegionMonth(cfg.month_style)])
    } else {
        FixedEffectSpec::demean(vec![Factor::UnitMonth(cfg.month_style)])
    };
    let spec = ClassoSpec {
        outcome: "lnOutcome".to_string(),
        regressors: vec!["Post".to_string(), "CounterSq".to_string(), "Trend".to_string()],
        fe,
    };
    Ok((out, spec))
}

/// Either an OLS-style or a likelihood-style fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnyFit {
    Ols(RegressionFit),
    Likelihood(LikelihoodFit),
}

impl AnyFit {
    pub fn names(&self) -> &[String] {
        match self {
            AnyFit::Ols(f) => &f.names,
            AnyFit::Likelihood(f) => &f.names,
        }
    }

    pub fn coef(&self) -> &[f64] {
        match self {
            AnyFit::Ols(f) => &f.coef,
            AnyFit::Likelihood(f) => &f.coef,
        }
    }

    pub fn vcov(&self) -> &[Vec<f64>] {
        match self {
            AnyFit::Ols(f) => &f.vcov,
            AnyFit::Likelihood(f) => &f.vcov,
        }
    }

    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.names().iter().position(|n| n == name).map(|j| self.coef()[j])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names()
            .iter()
            .position(|n| n == name)
            .map(|j| self.vcov()[j][j].max(0.0).sqrt())
    }
}

/// Standard triple-difference fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DddFit {
    pub fit: AnyFit,
    /// Name of the Post × Courtyard × US column.
    pub triple: String,
    pub estimator: Estimator,
    /// G ≈ n warning: clusters are (near-)singleton cells.
    pub near_singleton_clusters: bool,
}

impl DddFit {
    pub fn coef(&self) -> f64 {
        self.fit.coef_of(&self.triple).unwrap_or(f64::NAN)
    }

    pub fn se(&self) -> f64 {
        self.fit.se_of(&self.triple).unwrap_or(f64::NAN)
    }
}

const TRIPLE: &str = "Post:Courtyard:US";

fn treat_flags(data: &PanelDataset, treat_col: &str) -> Result<Vec<f64>> {
    let col = data.column(treat_col)?;
    if col.iter().all(|&v| v == 0.0) {
        return Err(Error::NoTreatedUnits);
    }
    Ok(col.to_vec())
}

fn us_indicator(data: &PanelDataset, focal: &str) -> Vec<f64> {
    let focal_idx = data.regions().iter().position(|r| r == focal);
    (0..data.n_rows())
        .map(|row| if Some(data.row_region(row)) == focal_idx { 1.0 } else { 0.0 })
        .collect()
}

/// Region-specific year trends for treated fields:
/// (Year_t − event year) × Courtyard × 1[region = r], one column per region.
fn push_year_trends(
    design: &mut Design,
    data: &PanelDataset,
    treat: &[f64],
    event_year: i32,
) {
    for (ridx, rname) in data.regions().iter().enumerate() {
        let col: Vec<f64> = (0..data.n_rows())
            .map(|row| {
                if data.row_region(row) == ridx {
                    let year = data.calendar()[data.row_time(row)].year;
                    (year - event_year) as f64 * treat[row]
                } else {
                    0.0
                }
            })
            .collect();
        design.push(format!("YearTrend:{rname}"), col);
    }
}

/// Estimate the standard triple-differencing model on a stacked region
/// panel: outcome on Post × Courtyard × US with a_ir × m_t fixed effects,
/// optional region-specific year trends, and clustered standard errors at
/// the region × field × month level.
pub fn estimate_ddd(
    data: &PanelDataset,
    outcome_col: &str,
    cfg: &EventConfig,
    estimator: Estimator,
    with_trend: bool,
) -> Result<DddFit> {
    if !data.has_regions() {
        return Err(Error::InvalidConfig("DDD needs a stacked region panel".into()));
    }
    let (post, _) = post_indicator(data, cfg)?;
    let treat = treat_flags(data, &cfg.treat_col)?;
    let us = us_indicator(data, &cfg.focal_region);

    let mut design = Design::new();
    let triple: Vec<f64> =
        (0..data.n_rows()).map(|i| post[i] * treat[i] * us[i]).collect();
    design.push(TRIPLE, triple);
    // Lower-order interactions not absorbed by a_ir × m_t; anything
    // collinear is dropped by the rank screen.
    let n = data.n_rows();
    design.push(
        "Post:Courtyard",
        (0..n).map(|i| post[i] * treat[i]).collect(),
    );
    design.push("Post:US", (0..n).map(|i| post[i] * us[i]).collect());
    design.push("Post", post.clone());
    if with_trend {
        push_year_trends(&mut design, data, &treat, cfg.event.year);
    }

    let cluster = ClusterKey::region_unit_month(data, cfg.month_style);
    let near_singleton = cluster.n_clusters * 10 >= data.n_rows() * 9;

    let fit = match estimator {
        Estimator::Ols => {
            let y = data.log1p_col(outcome_col)?;
            let parts =
                vec![Partition::from_factor(data, Factor::UnitRegionMonth(cfg.month_style))];
            AnyFit::Ols(ols_fit(&y, &design, None, Some(&parts), Some(&cluster))?)
        }
        Estimator::Ppml => {
            let y = data.column(outcome_col)?;
            let parts =
                vec![Partition::from_factor(data, Factor::UnitRegionMonth(cfg.month_style))];
            AnyFit::Likelihood(fit_ppml(y, &design, Some(&parts), Some(&cluster))?)
        }
        Estimator::Tobit => {
            // Separate country / technology / month dummies, not interacted.
            let y = data.log1p_col(outcome_col)?;
            let mut d = design.clone();
            d.push("const", vec![1.0; data.n_rows()]);
            d.push_dummies("unit", &Partition::from_factor(data, Factor::Unit), 1);
            d.push_dummies("region", &Partition::from_factor(data, Factor::Region), 1);
            d.push_dummies(
                "month",
                &Partition::from_factor(data, Factor::Month(cfg.month_style)),
                1,
            );
            AnyFit::Likelihood(fit_tobit(&y, &d, 0.0, Some(&cluster))?)
        }
    };

    Ok(DddFit {
        fit,
        triple: TRIPLE.to_string(),
        estimator,
        near_singleton_clusters: near_singleton,
    })
}

/// One lead/lag coefficient with its band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodCoef {
    /// Event-relative month s (never 0; that period is omitted).
    pub s: i64,
    pub coef: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Progressive triple-difference (event study) result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventStudyResult {
    pub ddd: Vec<PeriodCoef>,
    /// Decomposed Period × Courtyard terms.
    pub dd_treat: Vec<PeriodCoef>,
    /// Decomposed Period × US terms.
    pub dd_region: Vec<PeriodCoef>,
    /// Pure period effects τ_s.
    pub tau: Vec<PeriodCoef>,
    /// Year-trend coefficient for the focal region, when included.
    pub trend_coef: Option<f64>,
    pub estimator: Estimator,
    /// Joint Wald test that all pre-period DDD coefficients are zero.
    pub pretrend_wald: Option<(f64, f64)>,
    pub fit: AnyFit,
}

impl EventStudyResult {
    /// Plot-ready CSV: s, coef, lo, hi.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["s", "coef", "lo", "hi"])?;
        for p in &self.ddd {
            w.write_record([
                p.s.to_string(),
                format!("{}", p.coef),
                format!("{}", p.lo),
                format!("{}", p.hi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Estimate the progressive triple-differencing event study with leads and
/// lags around the event, the omitted period at s = 0, and relative times
/// beyond the window binned into the endpoints.
pub fn estimate_event_study(
    data: &PanelDataset,
    outcome_col: &str,
    cfg: &EventConfig,
    estimator: Estimator,
    with_trend: bool,
) -> Result<EventStudyResult> {
    if !data.has_regions() {
        return Err(Error::InvalidConfig("event study needs a stacked region panel".into()));
    }
    let t_event = data
        .time_of(cfg.event)
        .ok_or_else(|| Error::EventOutsideSample(cfg.event.to_string()))?;
    if t_event < 1 {
        return Err(Error::InsufficientPrePeriod { needed: 1, available: t_event });
    }
    let t_total = data.n_periods();
    if t_total - 1 - t_event < 1 {
        return Err(Error::InsufficientPrePeriod { needed: 1, available: t_total - 1 - t_event });
    }

    let treat = treat_flags(data, &cfg.treat_col)?;
    let us = us_indicator(data, &cfg.focal_region);

    // Event-relative time, binned into [−leads, lags].
    let rel: Vec<i64> = (0..data.n_rows())
        .map(|row| {
            let s = data.row_time(row) as i64 - t_event as i64;
            s.clamp(-(cfg.leads as i64), cfg.lags as i64)
        })
        .collect();
    // Periods actually present in the sample (s = 0 omitted).
    let mut periods: Vec<i64> = rel.iter().copied().filter(|&s| s != 0).collect();
    periods.sort();
    periods.dedup();

    let mut design = Design::new();
    for &s in &periods {
        let ind: Vec<f64> =
            rel.iter().map(|&r| if r == s { 1.0 } else { 0.0 }).collect();
        let col: Vec<f64> =
            (0..data.n_rows()).map(|i| ind[i] * treat[i] * us[i]).collect();
        design.push(format!("DDD:{s}"), col);
        let col: Vec<f64> = (0..data.n_rows()).map(|i| ind[i] * treat[i]).collect();
        design.push(format!("DD1:{s}"), col);
        let col: Vec<f64> = (0..data.n_rows()).map(|i| ind[i] * us[i]).collect();
        design.push(format!("DD2:{s}"), col);
        design.push(format!("Tau:{s}"), ind);
    }
    if with_trend {
        push_year_trends(&mut design, data, &treat, cfg.event.year);
    }

    let cluster = ClusterKey::region_unit_month(data, cfg.month_style);
    let parts = vec![Partition::from_factor(data, Factor::UnitRegionMonth(cfg.month_style))];
    let fit = match estimator {
        Estimator::Ols => {
            let y = data.log1p_col(outcome_col)?;
            AnyFit::Ols(ols_fit(&y, &design, None, Some(&parts), Some(&cluster))?)
        }
        Estimator::Ppml => {
            let y = data.column(outcome_col)?;
            AnyFit::Likelihood(fit_ppml(y, &design, Some(&parts), Some(&cluster))?)
        }
        Estimator::Tobit => {
            let y = data.log1p_col(outcome_col)?;
            let mut d = design.clone();
            d.push("const", vec![1.0; data.n_rows()]);
            d.push_dummies("unit", &Partition::from_factor(data, Factor::Unit), 1);
            d.push_dummies("region", &Partition::from_factor(data, Factor::Region), 1);
            d.push_dummies(
                "month",
                &Partition::from_factor(data, Factor::Month(cfg.month_style)),
                1,
            );
            AnyFit::Likelihood(fit_tobit(&y, &d, 0.0, Some(&cluster))?)
        }
    };

    let collect = |prefix: &str| -> Vec<PeriodCoef> {
        periods
            .iter()
            .filter_map(|&s| {
                let name = format!("{prefix}:{s}");
                let coef = fit.coef_of(&name)?;
                let se = fit.se_of(&name)?;
                Some(PeriodCoef { s, coef, se, lo: coef - 1.96 * se, hi: coef + 1.96 * se })
            })
            .collect()
    };
    let ddd = collect("DDD");
    let dd_treat = collect("DD1");
    let dd_region = collect("DD2");
    let tau = collect("Tau");

    let pre_names: Vec<String> = periods
        .iter()
        .filter(|&&s| s < 0)
        .map(|s| format!("DDD:{s}"))
        .collect();
    let pretrend_wald = wald_joint(fit.names(), fit.coef(), fit.vcov(), &pre_names);
    let trend_coef = fit.coef_of(&format!("YearTrend:{}", cfg.focal_region));

    Ok(EventStudyResult {
        ddd,
        dd_treat,
        dd_region,
        tau,
        trend_coef,
        estimator,
        pretrend_wald,
        fit,
    })
}

/// Technology-gap index UScit/(UScit + CNcit); values in [0, 1], larger
/// means a larger US lead.
pub fn compute_gap(uscit: f64, cncit: f64) -> Result<f64> {
    if uscit < 0.0 || cncit < 0.0 {
        return Err(Error::InvalidConfig("citation counts must be nonnegative".into()));
    }
    if uscit == 0.0 && cncit == 0.0 {
        return Err(Error::BothZero);
    }
    Ok(uscit / (uscit + cncit))
}

/// Relative policy-impact intensity 100·(YardShare/GrossShare − 1).
pub fn compute_treat_ratio(yard_share: f64, gross_share: f64) -> Result<f64> {
    if gross_share <= 0.0 {
        return Err(Error::ZeroGrossShare);
    }
    if !(0.0..=1.0).contains(&yard_share) || gross_share > 1.0 {
        return Err(Error::InvalidConfig("shares must lie in [0, 1]".into()));
    }
    Ok(100.0 * (yard_share / gross_share - 1.0))
}

/// Per-industry TreatRatio from raw patent totals: `yard` is the patent
/// volume of impacted fields in the industry, `gross` the industry's total
/// volume. Shares are formed against the respective grand totals, so the
/// gross-weighted mean of the ratios is identically zero.
pub fn treat_ratio_table(industries: &[(String, f64, f64)]) -> Result<Vec<(String, f64)>> {
    let yard_total: f64 = industries.iter().map(|(_, y, _)| y).sum();
    let gross_total: f64 = industries.iter().map(|(_, _, g)| g).sum();
    if yard_total <= 0.0 || gross_total <= 0.0 {
        return Err(Error::ZeroGrossShare);
    }
    industries
        .iter()
        .map(|(name, yard, gross)| {
            let ratio = compute_treat_ratio(yard / yard_total, gross / gross_total)?;
            Ok((name.clone(), ratio))
        })
        .collect()
}

/// One field row of the determinants table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterminantRow {
    pub field: String,
    pub inflow: bool,
    pub outflow: bool,
    pub both: bool,
    pub science_cit: f64,
    pub us_share: f64,
    pub gap: f64,
    /// IPC4 prefix for clustered standard errors.
    pub ipc4: String,
}

/// Assemble the Probit-ready determinants table. Every covariate must be
/// finite; rows with missing covariates are rejected with the field id.
pub fn build_determinants_table(
    fields: &[String],
    inflow: &[bool],
    outflow: &[bool],
    science_cit: &[f64],
    us_share: &[f64],
    gap: &[f64],
) -> Result<Vec<DeterminantRow>> {
    let n = fields.len();
    assert!(
        inflow.len() == n
            && outflow.len() == n
            && science_cit.len() == n
            && us_share.len() == n
            && gap.len() == n
    );
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        for (name, v) in
            [("ScienceCit", science_cit[i]), ("USshare", us_share[i]), ("gap", gap[i])]
        {
            if !v.is_finite() {
                return Err(Error::MissingCovariate {
                    field: fields[i].clone(),
                    col: name.to_string(),
                });
            }
        }
        rows.push(DeterminantRow {
            field: fields[i].clone(),
            inflow: inflow[i],
            outflow: outflow[i],
            both: inflow[i] && outflow[i],
            science_cit: science_cit[i],
            us_share: us_share[i],
            gap: gap[i],
            ipc4: fields[i].chars().take(4).collect(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use indexmap::IndexMap as IMap;

    fn panel_72_months() -> PanelDataset {
        let mut unit = Vec::new();
        let mut ym = Vec::new();
        let mut vals = Vec::new();
        for u in ["a", "b"] {
            for t in 0..72 {
                unit.push(u.to_string());
                ym.push(YearMonth::new(2015 + t / 12, (t % 12 + 1) as u32));
                vals.push(t as f64);
            }
        }
        let mut columns = IMap::new();
        columns.insert("y".to_string(), vals);
        PanelDataset::from_rows(unit, None, ym, columns).unwrap()
    }

    #[test]
    fn post_has_36_zeros_per_unit() {
        let p = panel_72_months();
        let cfg = EventConfig::default();
        let (post, degenerate) = post_indicator(&p, &cfg).unwrap();
        assert!(!degenerate);
        let zeros = post.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 36 * 2);
        assert_eq!(p.time_of(YearMonth::new(2018, 1)), Some(36));
    }

    #[test]
    fn event_at_sample_start_is_degenerate() {
        let p = panel_72_months();
        let cfg = EventConfig { event: YearMonth::new(2015, 1), ..Default::default() };
        let (post, degenerate) = post_indicator(&p, &cfg).unwrap();
        assert!(degenerate);
        assert!(post.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn trend_is_centered() {
        let p = panel_72_months();
        let (out, _) =
            build_grouped_eventstudy(&p, "y", "y", &EventConfig::default()).unwrap();
        let trend = out.column("Trend").unwrap();
        let mean: f64 = trend.iter().sum::<f64>() / trend.len() as f64;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn gap_examples() {
        assert_abs_diff_eq!(compute_gap(3.0, 1.0).unwrap(), 0.75);
        assert_abs_diff_eq!(compute_gap(0.0, 5.0).unwrap(), 0.0);
        for k in [1.0, 2.5, 100.0] {
            assert_abs_diff_eq!(compute_gap(k, k).unwrap(), 0.5);
        }
        assert!(matches!(compute_gap(0.0, 0.0), Err(Error::BothZero)));
    }

    #[test]
    fn gap_scale_invariant() {
        for a in [0.5, 2.0, 17.0] {
            assert_abs_diff_eq!(
                compute_gap(3.0 * a, 7.0 * a).unwrap(),
                compute_gap(3.0, 7.0).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn treat_ratio_examples() {
        assert_abs_diff_eq!(compute_treat_ratio(0.1, 0.1).unwrap(), 0.0);
        assert_abs_diff_eq!(compute_treat_ratio(0.2, 0.1).unwrap(), 100.0);
        assert!(matches!(compute_treat_ratio(0.2, 0.0), Err(Error::ZeroGrossShare)));
    }

    #[test]
    fn treat_ratio_weighted_mean_is_zero() {
        let industries = vec![
            ("i1".to_string(), 30.0, 100.0),
            ("i2".to_string(), 50.0, 400.0),
            ("i3".to_string(), 20.0, 250.0),
        ];
        let table = treat_ratio_table(&industries).unwrap();
        let gross_total: f64 = industries.iter().map(|(_, _, g)| g).sum();
        let weighted: f64 = table
            .iter()
            .zip(&industries)
            .map(|((_, ratio), (_, _, gross))| ratio * gross / gross_total)
            .sum();
        assert_abs_diff_eq!(weighted, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn determinants_both_is_conjunction() {
        let rows = build_determinants_table(
            &["A01B".to_string(), "B02C".to_string()],
            &[true, true],
            &[true, false],
            &[1.0, 2.0],
            &[0.1, 0.2],
            &[0.9, 0.8],
        )
        .unwrap();
        assert!(rows[0].both);
        assert!(!rows[1].both);
    }

    #[test]
    fn determinants_reject_missing_covariate() {
        let err = build_determinants_table(
            &["A01B".to_string()],
            &[true],
            &[false],
            &[f64::NAN],
            &[0.1],
            &[0.9],
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingCovariate { ref field, .. } if field == "A01B"));
    }
}
