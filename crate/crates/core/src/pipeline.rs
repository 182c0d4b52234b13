//! Staged pipeline driver: classo → courtyard → ddd → event-study →
//! placebo → determinants, with stamped artifacts and a report emitter.
//!
//! Every artifact carries the config hash and seed; a failed stage leaves
//! its outputs behind with a `.partial` suffix.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classo::{
    classify_courtyard, fit_classo, post_lasso, ClassoConfig, ClassoSpec, CourtyardRule,
    PostLassoFit,
};
use crate::error::{Error, Result};
use crate::glm::{fit_probit, probit_ame};
use crate::panel::{ClusterKey, CsvSchema, PanelDataset, Partition, YearMonth};
use crate::placebo::{run_placebo, PlaceboConfig};
use crate::regress::{normal_p_value, ols_fit, Design};
use crate::study::{
    build_grouped_eventstudy, compute_gap, estimate_ddd, estimate_event_study,
    treat_ratio_table, Estimator, EventConfig,
};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Classo,
    Courtyard,
    Ddd,
    EventStudy,
    Placebo,
    Determinants,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Classo,
        Stage::Courtyard,
        Stage::Ddd,
        Stage::EventStudy,
        Stage::Placebo,
        Stage::Determinants,
    ];
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Classo => "classo",
            Stage::Courtyard => "courtyard",
            Stage::Ddd => "ddd",
            Stage::EventStudy => "event-study",
            Stage::Placebo => "placebo",
            Stage::Determinants => "determinants",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classo" => Ok(Stage::Classo),
            "courtyard" => Ok(Stage::Courtyard),
            "ddd" => Ok(Stage::Ddd),
            "event-study" | "eventstudy" => Ok(Stage::EventStudy),
            "placebo" => Ok(Stage::Placebo),
            "determinants" => Ok(Stage::Determinants),
            other => Err(Error::InvalidConfig(format!("unknown stage `{other}`"))),
        }
    }
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Ols, Estimator::Ppml, Estimator::Tobit]
}

fn default_event_estimator() -> Estimator {
    Estimator::Ppml
}

/// Full pipeline configuration, read from a TOML file. Relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Stacked region panel of inflow counts (column `Sq`).
    pub inflow: PathBuf,
    /// Stacked region panel of outflow counts.
    pub outflow: PathBuf,
    /// Per-field determinants covariates (optional).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub determinants: Option<PathBuf>,
    /// Field → industry concordance (optional).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concordance: Option<PathBuf>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub classo: ClassoConfig,
    #[serde(default)]
    pub event: EventConfig,
    #[serde(default)]
    pub courtyard: CourtyardRule,
    #[serde(default = "default_estimators")]
    pub ddd_estimators: Vec<Estimator>,
    #[serde(default = "default_event_estimator")]
    pub event_estimator: Estimator,
    #[serde(default)]
    pub placebo: PlaceboConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        cfg.inflow = resolve(&cfg.inflow);
        cfg.outflow = resolve(&cfg.outflow);
        cfg.determinants = cfg.determinants.as_ref().map(&resolve);
        cfg.concordance = cfg.concordance.as_ref().map(&resolve);
        cfg.out_dir = resolve(&cfg.out_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [Some(&self.inflow), Some(&self.outflow), self.determinants.as_ref(), self.concordance.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::InvalidConfig(format!(
                    "input file `{}` does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Hash of the configuration; stamps every artifact. Paths are reduced
    /// to their file names so the same analysis run from two directories
    /// produces identical artifacts.
    pub fn hash(&self) -> String {
        fn base(p: &Path) -> PathBuf {
            p.file_name().map(PathBuf::from).unwrap_or_default()
        }
        let mut canonical = self.clone();
        canonical.inflow = base(&canonical.inflow);
        canonical.outflow = base(&canonical.outflow);
        canonical.determinants = canonical.determinants.as_deref().map(base);
        canonical.concordance = canonical.concordance.as_deref().map(base);
        canonical.out_dir = base(&canonical.out_dir);
        let canon = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seed stamped on artifacts (the placebo seed doubles as the run seed).
    pub fn seed(&self) -> u64 {
        self.placebo.seed
    }
}

/// Writes a stage's artifacts under `.partial` names, renaming them to
/// their final names only when the whole stage commits.
struct StageWriter {
    dir: PathBuf,
    pending: Vec<(PathBuf, PathBuf)>,
}

impl StageWriter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), pending: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let tmp = self.dir.join(format!("{name}.partial"));
        fs::write(&tmp, contents)?;
        self.pending.push((tmp, self.dir.join(name)));
        Ok(())
    }

    fn commit(mut self) -> Result<()> {
        for (tmp, fin) in self.pending.drain(..) {
            fs::rename(&tmp, &fin)?;
        }
        Ok(())
    }
}

fn stamp_line(cfg: &PipelineConfig, extra: &str) -> String {
    let mut s = format!("# config_hash={} seed={}", cfg.hash(), cfg.seed());
    if !extra.is_empty() {
        s.push(' ');
        s.push_str(extra);
    }
    s.push('\n');
    s
}

fn stamped_json(cfg: &PipelineConfig, mut body: serde_json::Value) -> String {
    let obj = body.as_object_mut().expect("artifact body is an object");
    obj.insert("config_hash".to_string(), cfg.hash().into());
    obj.insert("seed".to_string(), cfg.seed().into());
    let mut s = serde_json::to_string_pretty(&body).expect("artifact serializes");
    s.push('\n');
    s
}

fn load_stacked(path: &Path) -> Result<PanelDataset> {
    PanelDataset::load_csv(path, &CsvSchema::counts_panel(&["Sq"]))
}

/// Collapse a stacked region panel into a per-field panel with the focal
/// region's counts (`USSq`) and the pooled counterpart counts (`CounterSq`).
pub fn collapse_regions(data: &PanelDataset, focal_region: &str) -> Result<PanelDataset> {
    if !data.has_regions() {
        return Err(Error::InvalidConfig("expected a stacked region panel".into()));
    }
    let sq = data.column("Sq")?;
    let nu = data.n_units();
    let t = data.n_periods();
    let mut us = vec![0.0; nu * t];
    let mut counter = vec![0.0; nu * t];
    for row in 0..data.n_rows() {
        let dst = data.row_unit(row) * t + data.row_time(row);
        if data.regions()[data.row_region(row)] == focal_region {
            us[dst] += sq[row];
        } else {
            counter[dst] += sq[row];
        }
    }
    let mut unit = Vec::with_capacity(nu * t);
    let mut ym = Vec::with_capacity(nu * t);
    for u in data.units() {
        for &cal in data.calendar() {
            unit.push(u.clone());
            ym.push(cal);
        }
    }
    let mut columns = IndexMap::new();
    columns.insert("USSq".to_string(), us);
    columns.insert("CounterSq".to_string(), counter);
    PanelDataset::from_rows(unit, None, ym, columns)
}

fn classo_inputs(
    cfg: &PipelineConfig,
    path: &Path,
) -> Result<(PanelDataset, ClassoSpec)> {
    let stacked = load_stacked(path)?;
    let collapsed = collapse_regions(&stacked, &cfg.event.focal_region)?;
    build_grouped_eventstudy(&collapsed, "USSq", "CounterSq", &cfg.event)
}

fn group_json(fit: &PostLassoFit) -> serde_json::Value {
    serde_json::json!(fit
        .groups
        .iter()
        .map(|g| {
            serde_json::json!({
                "group": g.group,
                "n_units": g.n_units,
                "coefs": g.coefs,
            })
        })
        .collect::<Vec<_>>())
}

fn read_artifact_json(dir: &Path, name: &str) -> Result<serde_json::Value> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingArtifact(name.to_string()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Courtyard flags per field, as stored in courtyard.csv.
#[derive(Debug, Clone)]
pub struct CourtyardFlags {
    pub fields: Vec<String>,
    pub inflow: Vec<bool>,
    pub outflow: Vec<bool>,
}

impl CourtyardFlags {
    fn lookup(&self, dim: Dimension) -> HashMap<&str, bool> {
        let flags = match dim {
            Dimension::Inflow => &self.inflow,
            Dimension::Outflow => &self.outflow,
        };
        self.fields.iter().map(|f| f.as_str()).zip(flags.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Inflow,
    Outflow,
}

fn read_courtyard(dir: &Path) -> Result<CourtyardFlags> {
    let path = dir.join("courtyard.csv");
    if !path.exists() {
        return Err(Error::MissingArtifact("courtyard.csv".to_string()));
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&path)?;
    let mut fields = Vec::new();
    let mut inflow = Vec::new();
    let mut outflow = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        fields.push(rec[0].to_string());
        inflow.push(&rec[1] == "1");
        outflow.push(&rec[2] == "1");
    }
    Ok(CourtyardFlags { fields, inflow, outflow })
}

/// Attach a per-unit Courtyard column to a stacked panel.
fn with_flags(
    data: &PanelDataset,
    flags: &HashMap<&str, bool>,
    col: &str,
) -> PanelDataset {
    let vals: Vec<f64> = (0..data.n_rows())
        .map(|row| {
            let unit = data.units()[data.row_unit(row)].as_str();
            if flags.get(unit).copied().unwrap_or(false) { 1.0 } else { 0.0 }
        })
        .collect();
    data.with_column(col, vals)
}

fn assignments_from_json(v: &serde_json::Value, dim: &str) -> Result<Vec<usize>> {
    v.get(dim)
        .and_then(|d| d.get("assignment"))
        .and_then(|a| a.as_array())
        .map(|a| a.iter().map(|x| x.as_u64().unwrap_or(0) as usize).collect())
        .ok_or_else(|| Error::MissingArtifact(format!("classo_fit.json:{dim}")))
}

fn run_classo_stage(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let mut log = Vec::new();
    if cfg.classo.c == 0.0 {
        log.push("classo: c = 0, penalty off — degenerates to per-field OLS".to_string());
    }
    let mut body = serde_json::json!({});
    for (dim, path) in [("inflow", &cfg.inflow), ("outflow", &cfg.outflow)] {
        let (panel, spec) = classo_inputs(cfg, path)?;
        let fit = fit_classo(&panel, &spec, &cfg.classo)?;
        log.push(format!(
            "classo[{dim}]: {} iterations, converged={}, {} empty groups",
            fit.iterations,
            fit.converged,
            fit.empty_groups.len()
        ));
        body[dim] = serde_json::to_value(&fit)?;
    }
    let mut w = StageWriter::new(&cfg.out_dir)?;
    w.write("classo_fit.json", &stamped_json(cfg, body))?;
    w.commit()?;
    Ok(log)
}

fn run_courtyard_stage(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let mut log = Vec::new();
    let classo = read_artifact_json(&cfg.out_dir, "classo_fit.json")?;

    let mut flags_by_dim = Vec::new();
    let mut fields = Vec::new();
    let mut table2 = serde_json::json!({});
    for (dim, path) in [("inflow", &cfg.inflow), ("outflow", &cfg.outflow)] {
        let (panel, spec) = classo_inputs(cfg, path)?;
        let assignment = assignments_from_json(&classo, dim)?;
        let cluster = ClusterKey::by_unit(&panel);
        let fit = post_lasso(&panel, &assignment, &spec, cfg.classo.k, Some(&cluster))?;

        // Pooled column: same regression without group interactions.
        let mut pooled_design = Design::new();
        for reg in &spec.regressors {
            pooled_design.push(reg.clone(), panel.column(reg)?.to_vec());
        }
        let parts: Vec<Partition> =
            spec.fe.factors.iter().map(|&f| Partition::from_factor(&panel, f)).collect();
        let pooled = ols_fit(
            panel.column(&spec.outcome)?,
            &pooled_design,
            None,
            Some(&parts),
            Some(&cluster),
        )?;

        let (unit_flags, treated_groups) =
            classify_courtyard(&fit, &assignment, "Post", &cfg.courtyard);
        log.push(format!(
            "courtyard[{dim}]: {} treated groups, {} flagged fields",
            treated_groups.len(),
            unit_flags.iter().filter(|&&f| f).count()
        ));

        let alpha = classo.get(dim).and_then(|d| d.get("alpha")).cloned();
        table2[dim] = serde_json::json!({
            "pooled": pooled
                .names
                .iter()
                .enumerate()
                .map(|(j, n)| (n.clone(), (pooled.coef[j], pooled.se()[j])))
                .collect::<IndexMap<String, (f64, f64)>>(),
            "classo_alpha": alpha,
            "post_lasso": group_json(&fit),
            "treated_groups": treated_groups.iter().map(|g| g + 1).collect::<Vec<_>>(),
        });
        if fields.is_empty() {
            fields = panel.units().to_vec();
        }
        flags_by_dim.push(unit_flags);
    }

    let mut csv_body = String::from("field,inflow,outflow,both\n");
    for (i, f) in fields.iter().enumerate() {
        let a = flags_by_dim[0][i];
        let b = flags_by_dim[1][i];
        csv_body.push_str(&format!(
            "{f},{},{},{}\n",
            a as u8,
            b as u8,
            (a && b) as u8
        ));
    }

    let mut w = StageWriter::new(&cfg.out_dir)?;
    w.write("courtyard.csv", &format!("{}{csv_body}", stamp_line(cfg, "")))?;
    w.write("table2.json", &stamped_json(cfg, table2))?;
    w.commit()?;
    Ok(log)
}

fn ddd_table(
    cfg: &PipelineConfig,
    data: &PanelDataset,
) -> Result<serde_json::Value> {
    let mut rows = Vec::new();
    for &est in &cfg.ddd_estimators {
        for trend in [false, true] {
            let fit = estimate_ddd(data, "Sq", &cfg.event, est, trend)?;
            rows.push(serde_json::json!({
                "estimator": est.to_string(),
                "year_trend": trend,
                "coef": fit.coef(),
                "se": fit.se(),
                "near_singleton_clusters": fit.near_singleton_clusters,
            }));
        }
    }
    Ok(serde_json::json!({ "rows": rows }))
}

fn run_ddd_stage(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let flags = read_courtyard(&cfg.out_dir)?;
    let mut w = StageWriter::new(&cfg.out_dir)?;
    let mut log = Vec::new();
    for (dim, name, path) in [
        (Dimension::Inflow, "table3.json", &cfg.inflow),
        (Dimension::Outflow, "table4.json", &cfg.outflow),
    ] {
        let data = with_flags(&load_stacked(path)?, &flags.lookup(dim), &cfg.event.treat_col);
        let table = ddd_table(cfg, &data)?;
        log.push(format!("ddd[{name}]: {} fits", table["rows"].as_array().unwrap().len()));
        w.write(name, &stamped_json(cfg, table))?;
    }
    w.commit()?;
    Ok(log)
}

fn run_event_stage(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let flags = read_courtyard(&cfg.out_dir)?;
    let data = with_flags(
        &load_stacked(&cfg.inflow)?,
        &flags.lookup(Dimension::Inflow),
        &cfg.event.treat_col,
    );
    let res = estimate_event_study(&data, "Sq", &cfg.event, cfg.event_estimator, false)?;
    let mut body = stamp_line(cfg, "");
    body.push_str("s,coef,lo,hi\n");
    for p in &res.ddd {
        body.push_str(&format!("{},{},{},{}\n", p.s, p.coef, p.lo, p.hi));
    }
    let mut w = StageWriter::new(&cfg.out_dir)?;
    w.write("event_study.csv", &body)?;
    w.commit()?;
    let wald = res
        .pretrend_wald
        .map(|(s, p)| format!("wald={s:.3} p={p:.3}"))
        .unwrap_or_else(|| "wald=n/a".to_string());
    Ok(vec![format!(
        "event-study: {} coefficients ({}), pre-trend {wald}",
        res.ddd.len(),
        cfg.event_estimator
    )])
}

fn run_placebo_stage(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let flags = read_courtyard(&cfg.out_dir)?;
    let data = with_flags(
        &load_stacked(&cfg.inflow)?,
        &flags.lookup(Dimension::Inflow),
        &cfg.event.treat_col,
    );
    let dist = run_placebo(&data, "Sq", &cfg.event, &cfg.placebo)?;
    let extra = format!("actual={} p_value={}", dist.actual, dist.p_value);
    let mut body = stamp_line(cfg, &extra);
    body.push_str("rep,estimate\n");
    for (i, e) in dist.estimates.iter().enumerate() {
        body.push_str(&format!("{},{e}\n", i + 1));
    }
    let mut w = StageWriter::new(&cfg.out_dir)?;
    w.write("placebo.csv", &body)?;
    w.commit()?;
    Ok(vec![format!(
        "placebo: R={} actual={:.4} p={:.4}",
        dist.reps, dist.actual, dist.p_value
    )])
}

/// One row of the determinants covariates file.
type DeterminantRow = (String, f64, f64, f64, f64);

/// Determinants covariates file: field, science_cit, us_share, us_cit, cn_cit.
fn read_determinants(path: &Path) -> Result<Vec<DeterminantRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize, col: &str| -> Result<f64> {
            rec[j].trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                row: i + 2,
                col: col.to_string(),
                value: rec[j].to_string(),
            })
        };
        rows.push((
            rec[0].to_string(),
            num(1, "science_cit")?,
            num(2, "us_share")?,
            num(3, "us_cit")?,
            num(4, "cn_cit")?,
        ));
    }
    Ok(rows)
}

fn run_determinants_stage(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let Some(det_path) = &cfg.determinants else {
        return Ok(vec!["determinants: no covariates file, stage skipped".to_string()]);
    };
    let flags = read_courtyard(&cfg.out_dir)?;
    let inflow_map = flags.lookup(Dimension::Inflow);
    let outflow_map = flags.lookup(Dimension::Outflow);

    let mut log = Vec::new();
    let raw = read_determinants(det_path)?;
    let mut fields = Vec::new();
    let mut science = Vec::new();
    let mut usshare = Vec::new();
    let mut gap = Vec::new();
    let mut inflow = Vec::new();
    let mut outflow = Vec::new();
    let mut excluded = 0usize;
    for (field, sc, us, uscit, cncit) in &raw {
        match compute_gap(*uscit, *cncit) {
            Ok(g) => {
                fields.push(field.clone());
                science.push(*sc);
                usshare.push(*us);
                gap.push(g);
                inflow.push(inflow_map.get(field.as_str()).copied().unwrap_or(false));
                outflow.push(outflow_map.get(field.as_str()).copied().unwrap_or(false));
            }
            Err(Error::BothZero) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if excluded > 0 {
        log.push(format!("determinants: {excluded} fields excluded (zero citations)"));
    }

    let n = fields.len();
    let mut x = Design::new();
    x.push("const", vec![1.0; n]);
    x.push("ScienceCit", science.clone());
    x.push("USshare", usshare.clone());
    x.push("gap", gap.clone());

    let both: Vec<bool> =
        inflow.iter().zip(outflow.iter()).map(|(a, b)| *a && *b).collect();
    let mut table5 = serde_json::json!({});
    for (name, flag) in [("inflow", &inflow), ("outflow", &outflow), ("both", &both)] {
        let y: Vec<f64> = flag.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        let fit = fit_probit(&y, &x, None)?;
        let ame = probit_ame(&fit, &x);
        table5[name] = serde_json::json!({
            "n": n,
            "coef": fit
                .names
                .iter()
                .enumerate()
                .map(|(j, nm)| (nm.clone(), (fit.coef[j], fit.vcov[j][j].sqrt())))
                .collect::<IndexMap<String, (f64, f64)>>(),
            "ame": ame,
        });
        log.push(format!(
            "determinants[{name}]: {} flagged of {n}",
            flag.iter().filter(|&&f| f).count()
        ));
    }

    let mut w = StageWriter::new(&cfg.out_dir)?;
    w.write("table5.json", &stamped_json(cfg, table5))?;

    if let Some(conc_path) = &cfg.concordance {
        let mut rdr =
            csv::ReaderBuilder::new().comment(Some(b'#')).from_path(conc_path)?;
        let mut industry_of = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            industry_of.insert(rec[0].to_string(), rec[1].to_string());
        }
        let mut agg: IndexMap<String, (f64, f64)> = IndexMap::new();
        for (i, f) in fields.iter().enumerate() {
            if let Some(ind) = industry_of.get(f) {
                let e = agg.entry(ind.clone()).or_insert((0.0, 0.0));
                if inflow[i] {
                    e.0 += 1.0;
                }
                e.1 += 1.0;
            }
        }
        let industries: Vec<(String, f64, f64)> =
            agg.iter().map(|(k, &(y, g))| (k.clone(), y, g)).collect();
        let ratios = treat_ratio_table(&industries)?;
        let mut body = stamp_line(cfg, "");
        body.push_str("industry,yard,gross,treat_ratio\n");
        for ((name, yard, gross), (_, ratio)) in industries.iter().zip(ratios.iter()) {
            body.push_str(&format!("{name},{yard},{gross},{ratio}\n"));
        }
        w.write("treatratio.csv", &body)?;
        log.push(format!("treatratio: {} industries", industries.len()));
    }
    w.commit()?;
    Ok(log)
}

/// Run a single stage, reading upstream artifacts from the output directory.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<Vec<String>> {
    let res = match stage {
        Stage::Classo => run_classo_stage(cfg),
        Stage::Courtyard => run_courtyard_stage(cfg),
        Stage::Ddd => run_ddd_stage(cfg),
        Stage::EventStudy => run_event_stage(cfg),
        Stage::Placebo => run_placebo_stage(cfg),
        Stage::Determinants => run_determinants_stage(cfg),
    };
    res.map_err(|e| Error::StageFailed { stage: stage.to_string(), source: Box::new(e) })
}

/// Run the full pipeline in stage order; returns the concatenated stage logs.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let mut log = Vec::new();
    for stage in Stage::ALL {
        log.extend(run_stage(cfg, stage)?);
    }
    Ok(log)
}

/// Significance stars at the 10 / 5 / 1 % levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Format with 6 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let prec = (5 - mag).max(0) as usize;
    format!("{x:.prec$}")
}

const REPORT_ARTIFACTS: [&str; 8] = [
    "classo_fit.json",
    "courtyard.csv",
    "table2.json",
    "table3.json",
    "table4.json",
    "event_study.csv",
    "placebo.csv",
    "table5.json",
];

fn coef_se_lines(out: &mut String, map: &serde_json::Value) {
    if let Some(obj) = map.as_object() {
        for (name, pair) in obj {
            let c = pair[0].as_f64().unwrap_or(f64::NAN);
            let s = pair[1].as_f64().unwrap_or(f64::NAN);
            let p = normal_p_value(c, s);
            out.push_str(&format!(
                "| {name} | {}{} | {} |\n",
                fmt_sig(c),
                stars(p),
                fmt_sig(s)
            ));
        }
    }
}

/// Compose a markdown summary from a complete artifact directory.
pub fn emit_report(dir: &Path) -> Result<String> {
    for name in REPORT_ARTIFACTS {
        if !dir.join(name).exists() {
            return Err(Error::MissingArtifact(name.to_string()));
        }
    }
    let table2 = read_artifact_json(dir, "table2.json")?;
    let table3 = read_artifact_json(dir, "table3.json")?;
    let table4 = read_artifact_json(dir, "table4.json")?;
    let table5 = read_artifact_json(dir, "table5.json")?;

    let mut out = String::new();
    out.push_str("# Pipeline report\n\n");
    if let Some(h) = table2.get("config_hash").and_then(|v| v.as_str()) {
        out.push_str(&format!(
            "Config hash `{h}`, seed {}.\n\n",
            table2.get("seed").and_then(|v| v.as_u64()).unwrap_or(0)
        ));
    }
    out.push_str("Artifacts:\n");
    for name in REPORT_ARTIFACTS {
        out.push_str(&format!("- `{name}`\n"));
    }
    if dir.join("treatratio.csv").exists() {
        out.push_str("- `treatratio.csv`\n");
    }

    for dim in ["inflow", "outflow"] {
        out.push_str(&format!("\n## Grouped regression ({dim})\n\n"));
        out.push_str("| term | coef | SE |\n|---|---|---|\n");
        coef_se_lines(&mut out, &table2[dim]["pooled"]);
        if let Some(groups) = table2[dim]["post_lasso"].as_array() {
            for g in groups {
                out.push_str(&format!(
                    "\nGroup {} ({} fields):\n\n| term | coef | SE |\n|---|---|---|\n",
                    g["group"], g["n_units"]
                ));
                coef_se_lines(&mut out, &g["coefs"]);
            }
        }
    }

    for (name, table) in [("Triple difference, inflow", &table3), ("Triple difference, outflow", &table4)] {
        out.push_str(&format!("\n## {name}\n\n"));
        out.push_str("| estimator | year trend | coef | SE |\n|---|---|---|---|\n");
        if let Some(rows) = table["rows"].as_array() {
            for r in rows {
                let c = r["coef"].as_f64().unwrap_or(f64::NAN);
                let s = r["se"].as_f64().unwrap_or(f64::NAN);
                let p = normal_p_value(c, s);
                out.push_str(&format!(
                    "| {} | {} | {}{} | {} |\n",
                    r["estimator"].as_str().unwrap_or("?"),
                    r["year_trend"],
                    fmt_sig(c),
                    stars(p),
                    fmt_sig(s)
                ));
            }
        }
    }

    out.push_str("\n## Determinants (Probit AMEs)\n");
    for dim in ["inflow", "outflow", "both"] {
        out.push_str(&format!("\n{dim}:\n\n| term | AME | SE |\n|---|---|---|\n"));
        coef_se_lines(&mut out, &table5[dim]["ame"]);
    }

    out.push_str("\n## Plot data\n\n");
    out.push_str("- Event-study coefficients and bands: `event_study.csv` (s, coef, lo, hi)\n");
    out.push_str("- Placebo distribution: `placebo.csv` (rep, estimate)\n");
    Ok(out)
}

/// Write a self-contained synthetic demo: inflow/outflow panels,
/// determinants covariates, a field → industry concordance, and a pipeline
/// config. Returns the config path.
pub fn write_demo_inputs(dir: &Path, seed: u64) -> Result<PathBuf> {
    use crate::synthgen::{generate_ddd_panel, DddDgp};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fs::create_dir_all(dir)?;
    let dgp = DddDgp {
        n_units: 30,
        n_periods: 72,
        n_treated: 10,
        start: YearMonth::new(2015, 1),
        event: YearMonth::new(2018, 1),
        effect_level: -0.8,
        baseline: 2.5,
        seed,
        ..Default::default()
    };
    let (inflow, treated) = generate_ddd_panel(&dgp)?;
    inflow.write_csv(&dir.join("inflow.csv"))?;
    let (outflow, _) = generate_ddd_panel(&DddDgp {
        effect_level: -0.6,
        seed: seed.wrapping_add(1),
        ..dgp.clone()
    })?;
    outflow.write_csv(&dir.join("outflow.csv"))?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut det = String::from("field,science_cit,us_share,us_cit,cn_cit\n");
    let mut conc = String::from("field,industry\n");
    for (i, f) in inflow.units().iter().enumerate() {
        // Treated fields lean toward high science linkage and US share.
        let bump: f64 = if treated[i] { 0.3 } else { 0.0 };
        let sc = rng.random_range(0.0..2.0) + bump;
        let us = (rng.random_range(0.1..0.7) + bump).min(0.95);
        let uscit = rng.random_range(1.0f64..50.0).round();
        let cncit = rng.random_range(1.0f64..50.0).round();
        det.push_str(&format!("{f},{sc:.4},{us:.4},{uscit},{cncit}\n"));
        conc.push_str(&format!("{f},ind{}\n", i % 5));
    }
    fs::write(dir.join("determinants.csv"), det)?;
    fs::write(dir.join("concordance.csv"), conc)?;

    // Paths are written relative to the config file so the demo directory
    // can be moved wholesale.
    let cfg = PipelineConfig {
        inflow: "inflow.csv".into(),
        outflow: "outflow.csv".into(),
        determinants: Some("determinants.csv".into()),
        concordance: Some("concordance.csv".into()),
        out_dir: "out".into(),
        classo: ClassoConfig { seed, ..Default::default() },
        event: EventConfig::default(),
        courtyard: CourtyardRule::default(),
        ddd_estimators: default_estimators(),
        event_estimator: Estimator::Ppml,
        placebo: PlaceboConfig { reps: 30, seed, ..Default::default() },
    };
    let cfg_path = dir.join("pipeline.toml");
    fs::write(&cfg_path, toml::to_string_pretty(&cfg).expect("config serializes"))?;
    Ok(cfg_path)
}
