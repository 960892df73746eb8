//! Python bindings: configuration, synthesis and the per-stream pipeline.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use xfmr_integrity::config::{AppConfig, Engine};
use xfmr_integrity::pipeline::{ProcessingUnit, SampleSummary, Verdict};
use xfmr_integrity::synth::{measure, simulate_steinmetz, synth_analytic, Waveform};
use xfmr_integrity::Error;

type Synthesized = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Data { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn load(config: Option<&str>) -> PyResult<AppConfig> {
    AppConfig::parse(config.unwrap_or("")).map_err(err)
}

/// Detection threshold for a false-alarm probability `rho`.
#[pyfunction]
fn threshold(rho: f64) -> PyResult<f64> {
    xfmr_integrity::validity::threshold_for(rho).map_err(err)
}

/// Synthesizes the configured scenario. Returns
/// `(t_sim, truth, t, measured)`: truth at the simulation step, the
/// measurement at the output rate.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn synth(py: Python<'_>, config: Option<&str>) -> PyResult<Synthesized> {
    let cfg = load(config)?;
    let current: Waveform = py
        .detach(|| -> xfmr_integrity::Result<Waveform> {
            Ok(match cfg.synth.engine {
                Engine::Steinmetz => simulate_steinmetz(&cfg.transformer, &cfg.scenario)?.current,
                Engine::Analytic => {
                    synth_analytic(&cfg.model_config()?, &cfg.transformer, &cfg.scenario, cfg.mixing()?.as_ref())?.current
                }
            })
        })
        .map_err(err)?;
    let meas = measure(&current, &cfg.scenario, cfg.transformer.i_nom).map_err(err)?;
    Ok((current.time, current.value, meas.time, meas.value))
}

fn summary_dict<'py>(py: Python<'py>, s: &SampleSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k", s.k)?;
    d.set_item("t", s.t)?;
    d.set_item("i_meas", s.i_meas)?;
    d.set_item("i_est", s.i_est)?;
    d.set_item("i_m", s.i_m)?;
    d.set_item("i_s", s.i_s)?;
    d.set_item("r_hat", s.r_hat)?;
    d.set_item("r_n", s.r_n)?;
    let flag = match s.verdict {
        Verdict::Warmup => None,
        v => Some(v == Verdict::Invalid),
    };
    d.set_item("flag", flag)?;
    d.set_item("sigma_hat", s.sigma_hat)?;
    d.set_item("quality", s.quality.label())?;
    Ok(d)
}

/// One stream's processing unit.
#[pyclass]
struct Pipeline {
    unit: ProcessingUnit,
    block: Vec<f64>,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let cfg = load(config)?;
        let unit = ProcessingUnit::new(cfg.pipeline_config().map_err(err)?).map_err(err)?;
        Ok(Self { block: Vec::with_capacity(unit.block_len()), unit })
    }

    /// Processes one sample; returns the per-sample record and the
    /// reconstructed block (empty for a gap).
    fn push<'py>(&mut self, py: Python<'py>, t: f64, value: f64) -> PyResult<(Bound<'py, PyDict>, Vec<f64>)> {
        let s = self.unit.process_into(t, value, &mut self.block).map_err(err)?;
        Ok((summary_dict(py, &s)?, self.block.clone()))
    }

    /// Processes a whole record. Returns columns keyed by field name.
    fn run<'py>(&mut self, py: Python<'py>, times: Vec<f64>, values: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        if times.len() != values.len() {
            return Err(PyValueError::new_err("times and values differ in length"));
        }
        let input: Vec<(f64, f64)> = times.into_iter().zip(values).collect();
        let unit = &mut self.unit;
        let records = py.detach(|| unit.run_stream(&input)).map_err(|f| err(f.error))?;
        let d = PyDict::new(py);
        let col = |f: fn(&SampleSummary) -> f64| records.iter().map(|r| f(&r.summary)).collect::<Vec<f64>>();
        d.set_item("t", col(|s| s.t))?;
        d.set_item("i_est", col(|s| s.i_est))?;
        d.set_item("i_m", col(|s| s.i_m))?;
        d.set_item("i_s", col(|s| s.i_s))?;
        d.set_item("r_hat", col(|s| s.r_hat))?;
        d.set_item("sigma_hat", col(|s| s.sigma_hat))?;
        d.set_item("r_n", records.iter().map(|r| r.summary.r_n).collect::<Vec<_>>())?;
        let flags: Vec<Option<bool>> = records
            .iter()
            .map(|r| (r.summary.verdict != Verdict::Warmup).then_some(r.summary.verdict == Verdict::Invalid))
            .collect();
        d.set_item("flag", flags)?;
        d.set_item("quality", records.iter().map(|r| r.summary.quality.label()).collect::<Vec<_>>())?;
        Ok(d)
    }

    #[getter]
    fn block_len(&self) -> usize {
        self.unit.block_len()
    }

    #[getter]
    fn delta_t(&self) -> f64 {
        self.unit.config().delta_t
    }
}

#[pymodule]
fn xfmr_integrity_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_class::<Pipeline>()?;
    Ok(())
}
