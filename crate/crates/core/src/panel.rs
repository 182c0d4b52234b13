//! Long-format balanced panel data model: CSV ingestion, column transforms,
//! fixed-effect partitions, and cluster indexing.
//!
//! A [`PanelDataset`] stores a balanced panel of (unit, region, t)
//! observations in canonical row order (unit asc, region asc, t asc). Units
//! are cross-sectional identifiers (technology fields); the optional region
//! label turns the panel into a stacked field-by-region panel. All columns
//! are row-aligned numeric vectors; datasets are immutable after load and
//! every transform returns a new dataset.

use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar stamp for one time index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12.
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        Self { year, month }
    }

    /// Months elapsed since `origin` (may be negative).
    pub fn months_since(&self, origin: YearMonth) -> i64 {
        (self.year as i64 - origin.year as i64) * 12 + self.month as i64 - origin.month as i64
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Column-role map for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub unit: String,
    pub region: Option<String>,
    pub year: String,
    pub month: String,
    /// Numeric outcome/covariate columns to load.
    pub outcomes: Vec<String>,
    /// Subset of `outcomes` that must be nonnegative integers.
    #[serde(default)]
    pub counts: Vec<String>,
}

impl CsvSchema {
    /// Standard schema: `unit,region,year,month,<outcomes...>` with every
    /// outcome treated as a count column.
    pub fn counts_panel(outcomes: &[&str]) -> Self {
        Self {
            unit: "unit".into(),
            region: Some("region".into()),
            year: "year".into(),
            month: "month".into(),
            outcomes: outcomes.iter().map(|s| s.to_string()).collect(),
            counts: outcomes.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Same but without a region column.
    pub fn counts_panel_no_region(outcomes: &[&str]) -> Self {
        Self { region: None, ..Self::counts_panel(outcomes) }
    }
}

/// Balanced long-format panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    /// Distinct unit identifiers, ascending.
    units: Vec<String>,
    /// Distinct region labels, ascending; empty when the panel has no region dimension.
    regions: Vec<String>,
    /// Calendar stamp per time index, ascending; length = n_periods.
    calendar: Vec<YearMonth>,
    /// Row-aligned numeric columns.
    columns: IndexMap<String, Vec<f64>>,
}

impl PanelDataset {
    /// Assemble a canonical panel from parallel per-row vectors.
    ///
    /// Rows may arrive in any order; they are sorted into canonical order and
    /// checked for balance (every (unit, region, t) exactly once).
    pub fn from_rows(
        unit: Vec<String>,
        region: Option<Vec<String>>,
        ym: Vec<YearMonth>,
        columns: IndexMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let n = unit.len();
        assert!(region.as_ref().is_none_or(|r| r.len() == n));
        assert!(ym.len() == n);
        for (name, v) in &columns {
            if v.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "column `{name}` has {} rows, expected {n}",
                    v.len()
                )));
            }
        }

        let mut units: Vec<String> = unit.clone();
        units.sort();
        units.dedup();
        let mut regions: Vec<String> = match &region {
            Some(r) => {
                let mut v = r.clone();
                v.sort();
                v.dedup();
                v
            }
            None => Vec::new(),
        };
        regions.dedup();
        let mut calendar: Vec<YearMonth> = ym.clone();
        calendar.sort();
        calendar.dedup();

        let n_units = units.len();
        let n_regions = regions.len().max(1);
        let n_periods = calendar.len();
        let expected = n_units * n_regions * n_periods;

        let uidx: BTreeMap<&str, usize> =
            units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let ridx: BTreeMap<&str, usize> =
            regions.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let tidx: BTreeMap<YearMonth, usize> =
            calendar.iter().enumerate().map(|(i, t)| (*t, i)).collect();

        // Scatter each input row to its canonical position.
        let mut seen = vec![false; expected];
        let mut perm = vec![usize::MAX; expected];
        for row in 0..n {
            let u = uidx[unit[row].as_str()];
            let r = region.as_ref().map_or(0, |rs| ridx[rs[row].as_str()]);
            let t = tidx[&ym[row]];
            let pos = (u * n_regions + r) * n_periods + t;
            if seen[pos] {
                return Err(Error::UnbalancedPanel {
                    unit: unit[row].clone(),
                    region: region.as_ref().map(|rs| rs[row].clone()),
                    t,
                    kind: "duplicated",
                });
            }
            seen[pos] = true;
            perm[pos] = row;
        }
        if n != expected {
            // Name the first missing cell.
            for (pos, s) in seen.iter().enumerate() {
                if !s {
                    let t = pos % n_periods;
                    let r = (pos / n_periods) % n_regions;
                    let u = pos / (n_periods * n_regions);
                    return Err(Error::UnbalancedPanel {
                        unit: units[u].clone(),
                        region: if regions.is_empty() { None } else { Some(regions[r].clone()) },
                        t,
                        kind: "missing",
                    });
                }
            }
        }

        let columns = columns
            .into_iter()
            .map(|(name, v)| {
                let sorted: Vec<f64> = perm.iter().map(|&row| v[row]).collect();
                (name, sorted)
            })
            .collect();

        Ok(Self { units, regions, calendar, columns })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len().max(1)
    }

    pub fn n_periods(&self) -> usize {
        self.calendar.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_units() * self.n_regions() * self.n_periods()
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn has_regions(&self) -> bool {
        !self.regions.is_empty()
    }

    pub fn calendar(&self) -> &[YearMonth] {
        &self.calendar
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|s| s.as_str())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Unit index of each row in canonical order.
    pub fn row_unit(&self, row: usize) -> usize {
        row / (self.n_regions() * self.n_periods())
    }

    /// Region index of each row (0 when the panel has no regions).
    pub fn row_region(&self, row: usize) -> usize {
        (row / self.n_periods()) % self.n_regions()
    }

    /// Time index of each row.
    pub fn row_time(&self, row: usize) -> usize {
        row % self.n_periods()
    }

    /// Time index of a calendar stamp, if in sample.
    pub fn time_of(&self, ym: YearMonth) -> Option<usize> {
        self.calendar.binary_search(&ym).ok()
    }

    /// New dataset with an added (or replaced) column.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.n_rows());
        let mut out = self.clone();
        out.columns.insert(name.to_string(), values);
        out
    }

    /// Elementwise ln(1 + x) of a column. Values must be nonnegative.
    pub fn log1p_col(&self, col: &str) -> Result<Vec<f64>> {
        let v = self.column(col)?;
        for (row, &x) in v.iter().enumerate() {
            if x < 0.0 {
                return Err(Error::NegativeInput { row, col: col.to_string(), value: x });
            }
        }
        Ok(v.iter().map(|&x| x.ln_1p()).collect())
    }

    /// Load a canonical CSV panel.
    pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let col_pos = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let unit_pos = col_pos(&schema.unit)?;
        let region_pos = match &schema.region {
            Some(r) => Some(col_pos(r)?),
            None => None,
        };
        let year_pos = col_pos(&schema.year)?;
        let month_pos = col_pos(&schema.month)?;
        let out_pos: Vec<usize> =
            schema.outcomes.iter().map(|c| col_pos(c)).collect::<Result<_>>()?;

        let mut unit = Vec::new();
        let mut region: Option<Vec<String>> = region_pos.map(|_| Vec::new());
        let mut ym = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); schema.outcomes.len()];

        let parse_num = |row: usize, col: &str, raw: &str| -> Result<f64> {
            raw.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::NonNumericCell { row, col: col.to_string(), value: raw.to_string() }
            })
        };

        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let u = record.get(unit_pos).unwrap_or("").to_string();
            if u.is_empty() {
                return Err(Error::EmptyKey { row, col: schema.unit.clone() });
            }
            unit.push(u);
            if let (Some(pos), Some(rs)) = (region_pos, region.as_mut()) {
                let r = record.get(pos).unwrap_or("").to_string();
                if r.is_empty() {
                    return Err(Error::EmptyKey { row, col: schema.region.clone().unwrap() });
                }
                rs.push(r);
            }
            let year = parse_num(row, &schema.year, record.get(year_pos).unwrap_or(""))? as i32;
            let month = parse_num(row, &schema.month, record.get(month_pos).unwrap_or(""))? as u32;
            if !(1..=12).contains(&month) {
                return Err(Error::NonNumericCell {
                    row,
                    col: schema.month.clone(),
                    value: format!("{month}"),
                });
            }
            ym.push(YearMonth::new(year, month));
            for (j, (&pos, name)) in out_pos.iter().zip(&schema.outcomes).enumerate() {
                let v = parse_num(row, name, record.get(pos).unwrap_or(""))?;
                if schema.counts.contains(name) {
                    if v < 0.0 {
                        return Err(Error::NegativeCount { row, col: name.clone(), value: v });
                    }
                    if v.fract() != 0.0 {
                        return Err(Error::NonNumericCell {
                            row,
                            col: name.clone(),
                            value: format!("{v}"),
                        });
                    }
                }
                cols[j].push(v);
            }
        }

        let columns: IndexMap<String, Vec<f64>> =
            schema.outcomes.iter().cloned().zip(cols).collect();
        Self::from_rows(unit, region, ym, columns)
    }

    /// Write the panel in canonical CSV form (inverse of [`Self::load_csv`]).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["unit".to_string()];
        if self.has_regions() {
            header.push("region".to_string());
        }
        header.push("year".to_string());
        header.push("month".to_string());
        header.extend(self.columns.keys().cloned());
        writer.write_record(&header)?;
        for row in 0..self.n_rows() {
            let mut record = vec![self.units[self.row_unit(row)].clone()];
            if self.has_regions() {
                record.push(self.regions[self.row_region(row)].clone());
            }
            let ym = self.calendar[self.row_time(row)];
            record.push(ym.year.to_string());
            record.push(ym.month.to_string());
            for v in self.columns.values() {
                record.push(format!("{}", v[row]));
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Whether month effects use 12 calendar levels or one level per sample month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[derive(Default)]
pub enum MonthStyle {
    #[default]
    Calendar,
    YearMonth,
}


/// One fixed-effect factor: a map from row to category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Unit,
    Region,
    Year,
    Month(MonthStyle),
    /// Unit interacted with month effects (a_i × m_t).
    UnitMonth(MonthStyle),
    /// (Unit, region) pair interacted with month effects (a_ir × m_t).
    UnitRegionMonth(MonthStyle),
}

/// How absorbed factors are removed from the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbsorbMethod {
    Demean,
    ExplicitDummy,
}

/// A set of fixed-effect factors to absorb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectSpec {
    pub factors: Vec<Factor>,
    pub absorb_method: AbsorbMethod,
}

impl FixedEffectSpec {
    pub fn demean(factors: Vec<Factor>) -> Self {
        Self { factors, absorb_method: AbsorbMethod::Demean }
    }
}

/// A partition of rows into cells (one fixed-effect factor, resolved
/// against a concrete dataset).
#[derive(Debug, Clone)]
pub struct Partition {
    pub cell_of: Vec<u32>,
    pub n_cells: usize,
}

impl Partition {
    pub fn from_factor(data: &PanelDataset, factor: Factor) -> Self {
        let nr = data.n_regions();
        let nt = data.n_periods();
        let n = data.n_rows();
        let month_cells = |style: MonthStyle| -> (Vec<u32>, usize) {
            match style {
                MonthStyle::Calendar => {
                    let m: Vec<u32> =
                        (0..n).map(|r| data.calendar[data.row_time(r)].month - 1).collect();
                    (m, 12)
                }
                MonthStyle::YearMonth => ((0..n).map(|r| data.row_time(r) as u32).collect(), nt),
            }
        };
        let (cell_of, n_cells) = match factor {
            Factor::Unit => ((0..n).map(|r| data.row_unit(r) as u32).collect(), data.n_units()),
            Factor::Region => ((0..n).map(|r| data.row_region(r) as u32).collect(), nr),
            Factor::Year => {
                let years: Vec<i32> = {
                    let mut y: Vec<i32> = data.calendar.iter().map(|c| c.year).collect();
                    y.dedup();
                    y
                };
                let cells = (0..n)
                    .map(|r| {
                        let y = data.calendar[data.row_time(r)].year;
                        years.iter().position(|&x| x == y).unwrap() as u32
                    })
                    .collect();
                (cells, years.len())
            }
            Factor::Month(style) => month_cells(style),
            Factor::UnitMonth(style) => {
                let (m, nm) = month_cells(style);
                let cells =
                    (0..n).map(|r| data.row_unit(r) as u32 * nm as u32 + m[r]).collect();
                (cells, data.n_units() * nm)
            }
            Factor::UnitRegionMonth(style) => {
                let (m, nm) = month_cells(style);
                let cells = (0..n)
                    .map(|r| {
                        (data.row_unit(r) * nr + data.row_region(r)) as u32 * nm as u32 + m[r]
                    })
                    .collect();
                (cells, data.n_units() * nr * nm)
            }
        };
        Self { cell_of, n_cells }
    }

    /// Composite partition keyed by the cross of two partitions. Cell ids
    /// are compacted to the occupied cells.
    pub fn cross(&self, other: &Partition) -> Partition {
        let mut map: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut cell_of = Vec::with_capacity(self.cell_of.len());
        for (&a, &b) in self.cell_of.iter().zip(&other.cell_of) {
            let next = map.len() as u32;
            let id = *map.entry((a, b)).or_insert(next);
            cell_of.push(id);
        }
        Partition { cell_of, n_cells: map.len() }
    }
}

/// Cluster assignment for sandwich covariances.
#[derive(Debug, Clone)]
pub struct ClusterKey {
    pub cell_of: Vec<u32>,
    pub n_clusters: usize,
}

impl ClusterKey {
    pub fn from_partition(p: &Partition) -> Self {
        Self { cell_of: p.cell_of.clone(), n_clusters: p.n_cells }
    }

    /// Paper-style cluster level: region × unit × month.
    pub fn region_unit_month(data: &PanelDataset, style: MonthStyle) -> Self {
        let p = Partition::from_factor(data, Factor::UnitRegionMonth(style));
        Self::from_partition(&p)
    }

    /// One cluster per unit.
    pub fn by_unit(data: &PanelDataset) -> Self {
        let p = Partition::from_factor(data, Factor::Unit);
        Self::from_partition(&p)
    }
}

/// Demean `values` within the cells of one partition, optionally weighted.
/// Cells with zero total weight are left untouched.
pub fn demean_once(values: &mut [f64], p: &Partition, weights: Option<&[f64]>) {
    let mut sums = vec![0.0f64; p.n_cells];
    let mut wsum = vec![0.0f64; p.n_cells];
    match weights {
        Some(w) => {
            for (i, &v) in values.iter().enumerate() {
                let c = p.cell_of[i] as usize;
                sums[c] += w[i] * v;
                wsum[c] += w[i];
            }
        }
        None => {
            for (i, &v) in values.iter().enumerate() {
                let c = p.cell_of[i] as usize;
                sums[c] += v;
                wsum[c] += 1.0;
            }
        }
    }
    for c in 0..p.n_cells {
        if wsum[c] > 0.0 {
            sums[c] /= wsum[c];
        }
    }
    for (i, v) in values.iter_mut().enumerate() {
        let c = p.cell_of[i] as usize;
        if wsum[c] > 0.0 {
            *v -= sums[c];
        }
    }
}

/// Maximum absolute (weighted) cell mean of `values` over the partitions.
fn max_cell_mean(values: &[f64], partitions: &[Partition], weights: Option<&[f64]>) -> f64 {
    let mut worst = 0.0f64;
    for p in partitions {
        let mut sums = vec![0.0f64; p.n_cells];
        let mut wsum = vec![0.0f64; p.n_cells];
        for (i, &v) in values.iter().enumerate() {
            let c = p.cell_of[i] as usize;
            let w = weights.map_or(1.0, |w| w[i]);
            sums[c] += w * v;
            wsum[c] += w;
        }
        for c in 0..p.n_cells {
            if wsum[c] > 0.0 {
                worst = worst.max((sums[c] / wsum[c]).abs());
            }
        }
    }
    worst
}

pub const DEMEAN_TOL: f64 = 1e-10;
pub const DEMEAN_MAX_SWEEPS: usize = 200;

/// Alternating (weighted) demeaning of one column over several non-nested
/// partitions, iterated until every cell mean is below `DEMEAN_TOL`.
pub fn alternating_demean(
    values: &mut [f64],
    partitions: &[Partition],
    weights: Option<&[f64]>,
) -> Result<()> {
    if partitions.is_empty() {
        return Ok(());
    }
    let scale = values.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    for _ in 0..DEMEAN_MAX_SWEEPS {
        for p in partitions {
            demean_once(values, p, weights);
        }
        let residual = max_cell_mean(values, partitions, weights);
        if residual < DEMEAN_TOL * scale {
            return Ok(());
        }
    }
    let residual = max_cell_mean(values, partitions, weights);
    Err(Error::NoConvergence { residual, sweeps: DEMEAN_MAX_SWEEPS })
}

/// Within-transform the listed columns over the fixed-effect cells of `fe`,
/// returning a new dataset. Removed cell components are recoverable as the
/// difference from the source dataset.
pub fn within_transform(
    data: &PanelDataset,
    cols: &[&str],
    fe: &FixedEffectSpec,
) -> Result<PanelDataset> {
    let partitions: Vec<Partition> =
        fe.factors.iter().map(|&f| Partition::from_factor(data, f)).collect();
    let mut out = data.clone();
    for &col in cols {
        let mut values = data.column(col)?.to_vec();
        alternating_demean(&mut values, &partitions, None)?;
        out = out.with_column(col, values);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_panel() -> PanelDataset {
        // 2 units x 3 months, single region.
        let unit = vec!["a", "a", "a", "b", "b", "b"].into_iter().map(String::from).collect();
        let ym = vec![
            YearMonth::new(2020, 1),
            YearMonth::new(2020, 2),
            YearMonth::new(2020, 3),
            YearMonth::new(2020, 1),
            YearMonth::new(2020, 2),
            YearMonth::new(2020, 3),
        ];
        let mut columns = IndexMap::new();
        columns.insert("y".to_string(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        PanelDataset::from_rows(unit, None, ym, columns).unwrap()
    }

    #[test]
    fn balanced_panel_dimensions() {
        let p = small_panel();
        assert_eq!(p.n_units(), 2);
        assert_eq!(p.n_periods(), 3);
        assert_eq!(p.n_rows(), 6);
    }

    #[test]
    fn missing_cell_is_rejected() {
        let unit: Vec<String> =
            vec!["a", "a", "a", "b", "b"].into_iter().map(String::from).collect();
        let ym = vec![
            YearMonth::new(2020, 1),
            YearMonth::new(2020, 2),
            YearMonth::new(2020, 3),
            YearMonth::new(2020, 1),
            YearMonth::new(2020, 2),
        ];
        let mut columns = IndexMap::new();
        columns.insert("y".to_string(), vec![1.0; 5]);
        let err = PanelDataset::from_rows(unit, None, ym, columns).unwrap_err();
        match err {
            Error::UnbalancedPanel { unit, t, kind, .. } => {
                assert_eq!(unit, "b");
                assert_eq!(t, 2);
                assert_eq!(kind, "missing");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn log1p_examples() {
        let p = small_panel().with_column("x", vec![0.0, 1.0, 7.0, 0.0, std::f64::consts::E - 1.0, 0.0]);
        let v = p.log1p_col("x").unwrap();
        assert_abs_diff_eq!(v[0], 0.0);
        assert_abs_diff_eq!(v[1], std::f64::consts::LN_2, epsilon = 1e-6);
        assert_abs_diff_eq!(v[2], 2.079442, epsilon = 1e-6);
        assert_abs_diff_eq!(v[4], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log1p_rejects_negative() {
        let p = small_panel().with_column("x", vec![0.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(p.log1p_col("x"), Err(Error::NegativeInput { row: 1, .. })));
    }

    #[test]
    fn two_point_demeaning() {
        // Cell {(unit a, Jan): y=[3,5]} -> [-1, +1]: build 2 units x 2 years
        // so the (unit, calendar-month) cell has two rows.
        let unit: Vec<String> =
            vec!["a", "a", "b", "b"].into_iter().map(String::from).collect();
        let ym = vec![
            YearMonth::new(2019, 1),
            YearMonth::new(2020, 1),
            YearMonth::new(2019, 1),
            YearMonth::new(2020, 1),
        ];
        let mut columns = IndexMap::new();
        columns.insert("y".to_string(), vec![3.0, 5.0, 10.0, 10.0]);
        let p = PanelDataset::from_rows(unit, None, ym, columns).unwrap();
        let fe = FixedEffectSpec::demean(vec![Factor::UnitMonth(MonthStyle::Calendar)]);
        let out = within_transform(&p, &["y"], &fe).unwrap();
        let y = out.column("y").unwrap();
        assert_abs_diff_eq!(y[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[3], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cell_constant_column_annihilated() {
        let p = small_panel();
        // y constant within unit cells.
        let p = p.with_column("c", vec![7.0, 7.0, 7.0, -2.0, -2.0, -2.0]);
        let fe = FixedEffectSpec::demean(vec![Factor::Unit]);
        let out = within_transform(&p, &["c"], &fe).unwrap();
        for &v in out.column("c").unwrap() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }
}
