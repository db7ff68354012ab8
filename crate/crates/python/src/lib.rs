//! Python bindings: defect maps, the cluster finder, comparator and voter
//! primitives, whole repair trials, sweeps and address resolution.
//!
//! Structured results (reports, plans, sweep points, resolved accesses) are
//! returned as plain Python dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rmcam_tmr::cluster_finder::{self, ClusterParams};
use rmcam_tmr::config::{apply, parse_config};
use rmcam_tmr::experiment::{self, SweepTable};
use rmcam_tmr::rmcam_model::{self, BitWord, CompareMode, CompareOutcome};
use rmcam_tmr::tmr_selector;
use rmcam_tmr::{ClusterSpec, Rect, RepairPlan, TrialConfig};

type RectTuple = (usize, usize, usize, usize);
type WindowTuple = (usize, usize, usize, usize, usize);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rect_tuple(r: &Rect) -> RectTuple {
    (r.top, r.left, r.height, r.width)
}

/// Defaults, then a flat `key = value` config text, then keyword overrides.
fn trial_config(config: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<TrialConfig> {
    let mut c = parse_config(config, TrialConfig::default()).map_err(err)?;
    if let Some(kw) = overrides {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<bool>() {
                Ok(b) => b.to_string(),
                Err(_) => v.str()?.to_string(),
            };
            apply(&mut c, &key, &value).map_err(err)?;
        }
    }
    c.validate().map_err(err)?;
    Ok(c)
}

#[pyclass(name = "DefectMap", module = "rmcam_tmr", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyDefectMap {
    inner: rmcam_tmr::DefectMap,
}

#[pymethods]
impl PyDefectMap {
    #[new]
    fn new(rows: usize, cols: usize) -> PyResult<Self> {
        Ok(PyDefectMap {
            inner: rmcam_tmr::DefectMap::new(rows, cols).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_defects(rows: usize, cols: usize, defects: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(PyDefectMap {
            inner: rmcam_tmr::DefectMap::from_defects(rows, cols, defects).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyDefectMap {
            inner: text.parse().map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn defect_count(&self) -> usize {
        self.inner.defect_count()
    }

    #[getter]
    fn healthy_count(&self) -> usize {
        self.inner.healthy_count()
    }

    fn is_defective(&self, row: usize, col: usize) -> PyResult<bool> {
        self.inner.is_defective(row, col).map_err(err)
    }

    fn defects(&self) -> Vec<(usize, usize)> {
        self.inner.defects().collect()
    }

    fn count_in_rect(
        &self,
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    ) -> PyResult<usize> {
        let r = Rect::new(top, left, height, width).map_err(err)?;
        self.inner.count_in_rect(&r).map_err(err)
    }

    fn inject_uniform(&self, rate: f64, seed: u64) -> PyResult<Self> {
        Ok(PyDefectMap {
            inner: self.inner.inject_uniform(rate, seed).map_err(err)?,
        })
    }

    /// `clusters` holds `(row, col, std_dev, defect_count)` tuples.
    fn inject_clusters(
        &self,
        clusters: Vec<(usize, usize, f64, usize)>,
        seed: u64,
    ) -> PyResult<Self> {
        let specs = clusters
            .into_iter()
            .map(|(r, c, s, n)| ClusterSpec::new((r, c), s, n))
            .collect::<rmcam_tmr::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(PyDefectMap {
            inner: self.inner.inject_clusters(&specs, seed).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "DefectMap({}x{}, {} defects)",
            self.inner.rows(),
            self.inner.cols(),
            self.inner.defect_count()
        )
    }
}

/// `mode` is "lower" (search >= stored) or "upper" (search <= stored).
#[pyfunction]
fn bit_serial_compare(search: u64, stored: u64, width: usize, mode: &str) -> PyResult<bool> {
    let mode = match mode {
        "lower" => CompareMode::Lower,
        "upper" => CompareMode::Upper,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be 'lower' or 'upper', got {other:?}"
            )))
        }
    };
    let a = BitWord::new(search, width).map_err(err)?;
    let b = BitWord::new(stored, width).map_err(err)?;
    Ok(rmcam_model::bit_serial_compare(&a, &b, mode).map_err(err)? == CompareOutcome::Match)
}

#[pyfunction]
fn vote(a: bool, b: bool, c: bool) -> bool {
    tmr_selector::vote(a, b, c)
}

/// Returns `((top, left, height, width), defects)`.
#[pyfunction]
fn find_max_mask(
    map: PyRef<'_, PyDefectMap>,
    height: usize,
    width: usize,
) -> PyResult<(RectTuple, usize)> {
    let (r, n) = cluster_finder::find_max_mask(&map.inner, height, width).map_err(err)?;
    Ok((rect_tuple(&r), n))
}

/// Returns `(windows, residual)` with windows as
/// `(top, left, height, width, defects_covered)`.
#[pyfunction]
#[pyo3(signature = (map, mask_height=25, mask_width=25, density_threshold=150, boundary_threshold=2, max_clusters=None))]
fn extract_clusters(
    map: PyRef<'_, PyDefectMap>,
    mask_height: usize,
    mask_width: usize,
    density_threshold: usize,
    boundary_threshold: usize,
    max_clusters: Option<usize>,
) -> PyResult<(Vec<WindowTuple>, PyDefectMap)> {
    let params = ClusterParams {
        initial_mask_height: mask_height,
        initial_mask_width: mask_width,
        density_threshold,
        boundary_threshold,
        max_clusters,
        ..ClusterParams::default()
    };
    let ex = cluster_finder::extract_clusters(&map.inner, &params).map_err(err)?;
    let windows = ex
        .windows
        .iter()
        .map(|w| {
            (
                w.bounds.top,
                w.bounds.left,
                w.bounds.height,
                w.bounds.width,
                w.defects_covered,
            )
        })
        .collect();
    Ok((windows, PyDefectMap { inner: ex.residual }))
}

/// Generates and repairs one array. Returns `(report, plan_json)`.
#[pyfunction]
#[pyo3(signature = (config="", **overrides))]
fn run_trial<'py>(
    py: Python<'py>,
    config: &str,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let c = trial_config(config, overrides)?;
    let out = py.detach(|| experiment::run_trial(&c)).map_err(err)?;
    Ok((to_py(py, &out.report)?, out.plan.to_json().map_err(err)?))
}

/// Repairs an existing map. Returns `(report, plan_json)`.
#[pyfunction]
#[pyo3(signature = (map, config="", **overrides))]
fn repair<'py>(
    py: Python<'py>,
    map: PyRef<'py, PyDefectMap>,
    config: &str,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let mut c = trial_config(config, overrides)?;
    c.rows = map.inner.rows();
    c.cols = map.inner.cols();
    let m = map.inner.clone();
    let out = py.detach(|| experiment::repair_map(&m, &c)).map_err(err)?;
    Ok((to_py(py, &out.report)?, out.plan.to_json().map_err(err)?))
}

fn sweep_result<'py>(py: Python<'py>, table: &SweepTable) -> PyResult<(Bound<'py, PyAny>, String)> {
    Ok((to_py(py, &table.points)?, table.to_csv()))
}

/// Returns `(points, csv_text)`.
#[pyfunction]
#[pyo3(signature = (rates, seeds=20, config="", **overrides))]
fn sweep_uniform<'py>(
    py: Python<'py>,
    rates: Vec<f64>,
    seeds: usize,
    config: &str,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let c = trial_config(config, overrides)?;
    let table = py
        .detach(|| experiment::sweep_uniform(&c, &rates, seeds))
        .map_err(err)?;
    sweep_result(py, &table)
}

/// Returns `(points, csv_text)`.
#[pyfunction]
#[pyo3(signature = (rates, seeds=20, config="", **overrides))]
fn sweep_cluster<'py>(
    py: Python<'py>,
    rates: Vec<f64>,
    seeds: usize,
    config: &str,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let c = trial_config(config, overrides)?;
    let table = py
        .detach(|| experiment::sweep_cluster(&c, &rates, seeds))
        .map_err(err)?;
    sweep_result(py, &table)
}

/// Resolves a logical address through a plan produced by `run_trial` or `repair`.
#[pyfunction]
fn resolve<'py>(
    py: Python<'py>,
    plan_json: &str,
    row: usize,
    col: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let pipeline = RepairPlan::from_json(plan_json)
        .and_then(|p| p.pipeline())
        .map_err(err)?;
    to_py(py, &pipeline.resolve(row, col).map_err(err)?)
}

#[pymodule(name = "rmcam_tmr")]
pub fn rmcam_tmr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDefectMap>()?;
    m.add_function(wrap_pyfunction!(bit_serial_compare, m)?)?;
    m.add_function(wrap_pyfunction!(vote, m)?)?;
    m.add_function(wrap_pyfunction!(find_max_mask, m)?)?;
    m.add_function(wrap_pyfunction!(extract_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(repair, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(resolve, m)?)?;
    m.add("SEED_ENV", experiment::SEED_ENV)?;
    Ok(())
}
