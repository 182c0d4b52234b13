//! Python bindings for the clpanel toolkit.
//!
//! Build the importable module with
//! `cargo build --release -p clpanel-py --features extension-module`
//! and rename `libclpanel.so` to `clpanel.so` (see python/smoke_test.py).

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::clpanel as core;
use core::panel::CsvSchema;
use core::study::Estimator;
use core::YearMonth;

fn err(e: core::Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn ym((year, month): (i32, u32)) -> YearMonth {
    YearMonth::new(year, month)
}

fn parse_estimator(s: &str) -> PyResult<Estimator> {
    s.parse().map_err(err)
}

/// A balanced monthly panel, optionally stacked over regions.
#[pyclass(name = "Panel", from_py_object)]
#[derive(Clone)]
struct PyPanel {
    inner: core::PanelDataset,
}

#[pymethods]
impl PyPanel {
    /// Load a CSV with columns unit[,region],year,month plus count columns.
    #[staticmethod]
    #[pyo3(signature = (path, outcomes, region=true))]
    fn load_csv(path: PathBuf, outcomes: Vec<String>, region: bool) -> PyResult<Self> {
        let names: Vec<&str> = outcomes.iter().map(|s| s.as_str()).collect();
        let schema = if region {
            CsvSchema::counts_panel(&names)
        } else {
            CsvSchema::counts_panel_no_region(&names)
        };
        Ok(Self { inner: core::PanelDataset::load_csv(&path, &schema).map_err(err)? })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(err)
    }

    #[getter]
    fn n_units(&self) -> usize {
        self.inner.n_units()
    }

    #[getter]
    fn n_regions(&self) -> usize {
        self.inner.n_regions()
    }

    #[getter]
    fn n_periods(&self) -> usize {
        self.inner.n_periods()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn units(&self) -> Vec<String> {
        self.inner.units().to_vec()
    }

    #[getter]
    fn regions(&self) -> Vec<String> {
        self.inner.regions().to_vec()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.column_names().map(|s| s.to_string()).collect()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.column(name).map_err(err)?.to_vec())
    }

    fn with_column(&self, name: &str, values: Vec<f64>) -> PyResult<Self> {
        if values.len() != self.inner.n_rows() {
            return Err(PyValueError::new_err("column length must match n_rows"));
        }
        Ok(Self { inner: self.inner.with_column(name, values) })
    }

    fn __repr__(&self) -> String {
        format!(
            "Panel({} units x {} regions x {} months)",
            self.inner.n_units(),
            self.inner.n_regions(),
            self.inner.n_periods()
        )
    }
}

/// Latent-group classification of per-unit slopes.
#[pyclass(name = "ClassoFit")]
struct PyClassoFit {
    inner: core::ClassoFit,
}

#[pymethods]
impl PyClassoFit {
    #[getter]
    fn assignment(&self) -> Vec<usize> {
        self.inner.assignment.clone()
    }

    #[getter]
    fn alpha(&self) -> Vec<Vec<f64>> {
        self.inner.alpha.clone()
    }

    #[getter]
    fn beta(&self) -> Vec<Vec<f64>> {
        self.inner.beta.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.inner.objective_trace.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }
}

/// Classify units into latent slope groups on a per-unit panel.
#[pyfunction]
#[pyo3(signature = (panel, outcome, regressors, k=3, c=0.25, seed=0))]
fn fit_classo(
    panel: &PyPanel,
    outcome: &str,
    regressors: Vec<String>,
    k: usize,
    c: f64,
    seed: u64,
) -> PyResult<PyClassoFit> {
    let spec = core::ClassoSpec {
        outcome: outcome.to_string(),
        regressors,
        fe: core::FixedEffectSpec::demean(vec![core::Factor::Unit]),
    };
    let cfg = core::ClassoConfig { k, c, seed, ..Default::default() };
    Ok(PyClassoFit { inner: core::fit_classo(&panel.inner, &spec, &cfg).map_err(err)? })
}

/// Standard triple difference; returns (coef, se).
#[pyfunction]
#[pyo3(signature = (panel, outcome, estimator="ppml", event=(2018, 1), treat_col="Courtyard", focal_region="US", with_trend=false))]
fn estimate_ddd(
    panel: &PyPanel,
    outcome: &str,
    estimator: &str,
    event: (i32, u32),
    treat_col: &str,
    focal_region: &str,
    with_trend: bool,
) -> PyResult<(f64, f64)> {
    let cfg = core::EventConfig {
        event: ym(event),
        treat_col: treat_col.to_string(),
        focal_region: focal_region.to_string(),
        ..Default::default()
    };
    let fit = core::estimate_ddd(&panel.inner, outcome, &cfg, parse_estimator(estimator)?, with_trend)
        .map_err(err)?;
    Ok((fit.coef(), fit.se()))
}

/// Progressive triple difference; returns a list of (s, coef, lo, hi).
#[pyfunction]
#[pyo3(signature = (panel, outcome, estimator="ppml", event=(2018, 1), leads=20, lags=20, treat_col="Courtyard", focal_region="US"))]
#[allow(clippy::too_many_arguments)]
fn estimate_event_study(
    panel: &PyPanel,
    outcome: &str,
    estimator: &str,
    event: (i32, u32),
    leads: usize,
    lags: usize,
    treat_col: &str,
    focal_region: &str,
) -> PyResult<Vec<(i64, f64, f64, f64)>> {
    let cfg = core::EventConfig {
        event: ym(event),
        leads,
        lags,
        treat_col: treat_col.to_string(),
        focal_region: focal_region.to_string(),
        ..Default::default()
    };
    let res = core::estimate_event_study(
        &panel.inner,
        outcome,
        &cfg,
        parse_estimator(estimator)?,
        false,
    )
    .map_err(err)?;
    Ok(res.ddd.iter().map(|p| (p.s, p.coef, p.lo, p.hi)).collect())
}

/// Randomization inference on the triple-difference coefficient.
#[pyfunction]
#[pyo3(signature = (panel, outcome, reps=200, seed=0, estimator="ppml", event=(2018, 1), treat_col="Courtyard", focal_region="US"))]
#[allow(clippy::too_many_arguments)]
fn run_placebo<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    outcome: &str,
    reps: usize,
    seed: u64,
    estimator: &str,
    event: (i32, u32),
    treat_col: &str,
    focal_region: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let event_cfg = core::EventConfig {
        event: ym(event),
        treat_col: treat_col.to_string(),
        focal_region: focal_region.to_string(),
        ..Default::default()
    };
    let cfg = core::PlaceboConfig {
        reps,
        seed,
        estimator: parse_estimator(estimator)?,
        with_trend: false,
    };
    let dist = core::run_placebo(&panel.inner, outcome, &event_cfg, &cfg).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("actual", dist.actual)?;
    out.set_item("p_value", dist.p_value)?;
    out.set_item("estimates", dist.estimates)?;
    Ok(out)
}

/// Relative technological position: us / (us + cn).
#[pyfunction]
fn compute_gap(uscit: f64, cncit: f64) -> PyResult<f64> {
    core::compute_gap(uscit, cncit).map_err(err)
}

/// Relative restriction intensity: 100 * (yard_share / gross_share - 1).
#[pyfunction]
fn compute_treat_ratio(yard_share: f64, gross_share: f64) -> PyResult<f64> {
    core::compute_treat_ratio(yard_share, gross_share).map_err(err)
}

/// Synthetic grouped-slope panel; returns (panel, true_labels).
#[pyfunction]
#[pyo3(signature = (n_units=100, n_periods=72, group_slopes=None, noise_sigma=0.1, seed=0))]
fn generate_grouped_panel(
    n_units: usize,
    n_periods: usize,
    group_slopes: Option<Vec<Vec<f64>>>,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<(PyPanel, Vec<usize>)> {
    let slopes = group_slopes.unwrap_or_else(|| vec![vec![1.0], vec![-1.0]]);
    let k = slopes.len();
    let cfg = core::GroupedDgp {
        n_units,
        n_periods,
        group_slopes: slopes,
        group_proportions: vec![1.0 / k as f64; k],
        noise_sigma,
        seed,
        ..Default::default()
    };
    let (panel, labels) = core::generate_grouped_panel(&cfg).map_err(err)?;
    Ok((PyPanel { inner: panel }, labels))
}

/// Synthetic stacked-region count panel; returns (panel, treated_flags).
#[pyfunction]
#[pyo3(signature = (n_units=40, n_periods=72, n_treated=12, effect_level=-0.438, event=(2018, 1), seed=0))]
fn generate_ddd_panel(
    n_units: usize,
    n_periods: usize,
    n_treated: usize,
    effect_level: f64,
    event: (i32, u32),
    seed: u64,
) -> PyResult<(PyPanel, Vec<bool>)> {
    let cfg = core::DddDgp {
        n_units,
        n_periods,
        n_treated,
        effect_level,
        event: ym(event),
        seed,
        ..Default::default()
    };
    let (panel, treated) = core::generate_ddd_panel(&cfg).map_err(err)?;
    Ok((PyPanel { inner: panel }, treated))
}

/// Run the staged pipeline from a TOML config; returns the stage log.
#[pyfunction]
fn run_pipeline(config: PathBuf) -> PyResult<Vec<String>> {
    let cfg = core::PipelineConfig::load(&config).map_err(err)?;
    core::run_pipeline(&cfg).map_err(err)
}

/// Markdown summary of a completed artifact directory.
#[pyfunction]
fn emit_report(dir: PathBuf) -> PyResult<String> {
    core::emit_report(&dir).map_err(err)
}

/// Write synthetic demo inputs + config; returns the config path.
#[pyfunction]
#[pyo3(signature = (dir, seed=0))]
fn write_demo_inputs(dir: PathBuf, seed: u64) -> PyResult<PathBuf> {
    core::write_demo_inputs(&dir, seed).map_err(err)
}

#[pymodule]
fn clpanel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyClassoFit>()?;
    m.add_function(wrap_pyfunction!(fit_classo, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_ddd, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_event_study, m)?)?;
    m.add_function(wrap_pyfunction!(run_placebo, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gap, m)?)?;
    m.add_function(wrap_pyfunction!(compute_treat_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(generate_grouped_panel, m)?)?;
    m.add_function(wrap_pyfunction!(generate_ddd_panel, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(emit_report, m)?)?;
    m.add_function(wrap_pyfunction!(write_demo_inputs, m)?)?;
    Ok(())
}
