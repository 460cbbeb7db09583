//! Python module `janeeye`.

use std::path::PathBuf;

use janeeye::accel::{build_schedule, measure_sparsity, simulate_schedule, EnergyCoefficients, HwConfig, SimOptions, SparsitySource};
use janeeye::activations;
use janeeye::event_io::{downsample, parse_events, read_frames, validate_events, write_frame, CountFrames, Event, EventFormat, SensorGeometry, TimeFrames};
use janeeye::fixed_point;
use janeeye::model_io::{read_model_file, write_model_file, ModelFile};
use janeeye::network::{forward_sequence, FloatWeights, Mode, ModelConfig, ModelWeights, ReferenceActivations};
use janeeye::quantizer::quantize_model;
use janeeye::tensor::Tensor;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn read(path: &PathBuf) -> PyResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))
}

/// Downsampled 3-channel event frames.
#[pyclass(name = "Frames", module = "janeeye")]
struct PyFrames {
    inner: Vec<Tensor<i32>>,
}

#[allow(clippy::too_many_arguments)]
fn aggregate(events: &[Event], mode: &str, dt_us: u64, n_evt: usize, factor: usize, t0: Option<i64>, geom: SensorGeometry) -> PyResult<PyFrames> {
    if factor == 0 {
        return Err(value_err("downsample factor must be positive"));
    }
    let raw: Vec<_> = match mode {
        "time" => {
            let t0 = t0.unwrap_or_else(|| events.first().map_or(0, |e| e.t as i64 - 1));
            TimeFrames::new(events, dt_us, t0, geom).map_err(value_err)?.collect()
        }
        "count" => CountFrames::new(events, n_evt, geom).map_err(value_err)?.collect(),
        m => return Err(value_err(format!("unknown aggregation mode '{m}'"))),
    };
    let inner = raw
        .iter()
        .map(|f| if factor == 1 { Ok(f.data.clone()) } else { downsample(f, factor).map(|d| d.data) })
        .collect::<Result<_, _>>()
        .map_err(value_err)?;
    Ok(PyFrames { inner })
}

#[pymethods]
impl PyFrames {
    /// Aggregate `(t_us, x, y, p)` tuples into frames.
    #[staticmethod]
    #[pyo3(signature = (events, mode="time", dt_us=10_000, n_evt=5000, downsample=8, t0=None, width=640, height=480))]
    #[allow(clippy::too_many_arguments)]
    fn from_events(
        events: Vec<(u64, u16, u16, i8)>,
        mode: &str,
        dt_us: u64,
        n_evt: usize,
        downsample: usize,
        t0: Option<i64>,
        width: u16,
        height: u16,
    ) -> PyResult<Self> {
        let geom = SensorGeometry { width, height };
        let events: Vec<Event> = events.into_iter().map(|(t, x, y, p)| Event::new(t, x, y, p)).collect();
        validate_events(&events, geom).map_err(value_err)?;
        aggregate(&events, mode, dt_us, n_evt, downsample, t0, geom)
    }

    /// Aggregate a CSV or binary event file.
    #[staticmethod]
    #[pyo3(signature = (path, mode="time", dt_us=10_000, n_evt=5000, downsample=8, t0=None, width=640, height=480))]
    #[allow(clippy::too_many_arguments)]
    fn from_event_file(path: PathBuf, mode: &str, dt_us: u64, n_evt: usize, downsample: usize, t0: Option<i64>, width: u16, height: u16) -> PyResult<Self> {
        let bytes = read(&path)?;
        let geom = SensorGeometry { width, height };
        let events = parse_events(&bytes, EventFormat::sniff(&bytes), geom).map_err(value_err)?;
        aggregate(&events, mode, dt_us, n_evt, downsample, t0, geom)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyFrames { inner: read_frames(&read(&path)?).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let mut out = Vec::new();
        for f in &self.inner {
            write_frame(&mut out, f).map_err(value_err)?;
        }
        std::fs::write(&path, out).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(channels, height, width)` of the first frame.
    #[getter]
    fn shape(&self) -> Option<(usize, usize, usize)> {
        self.inner.first().map(|t| (t.c, t.h, t.w))
    }

    /// Frame `i` as nested lists `[c][y][x]`.
    fn get(&self, i: usize) -> PyResult<Vec<Vec<Vec<i32>>>> {
        let t = self.inner.get(i).ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(i))?;
        Ok((0..t.c).map(|c| (0..t.h).map(|y| (0..t.w).map(|x| t.get(c, y, x)).collect()).collect()).collect())
    }
}

type Inference<'py> = (Vec<(f64, f64)>, Bound<'py, PyAny>);

/// A model configuration with float and/or fixed-point weights.
#[pyclass(name = "Model", module = "janeeye")]
struct PyModel {
    inner: ModelFile,
}

fn parse_config(config_json: Option<&str>) -> PyResult<ModelConfig> {
    match config_json {
        None => Ok(ModelConfig::default()),
        Some(s) => {
            let c: ModelConfig = serde_json::from_str(s).map_err(value_err)?;
            c.validate().map_err(value_err)?;
            Ok(c)
        }
    }
}

#[pymethods]
impl PyModel {
    /// Seeded random weights, quantized alongside the float copy.
    #[new]
    #[pyo3(signature = (seed=0, zero_weights=false, config_json=None))]
    fn new(seed: u64, zero_weights: bool, config_json: Option<&str>) -> PyResult<Self> {
        let config = parse_config(config_json)?;
        let float = if zero_weights { FloatWeights::centred_zeros(&config) } else { FloatWeights::random(&config, seed) }.map_err(value_err)?;
        let fixed = quantize_model(&float, &config).map_err(value_err)?.0;
        Ok(PyModel { inner: ModelFile { config, fixed: Some(fixed), float: Some(float) } })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: read_model_file(&path).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_model_file(&path, &self.inner).map_err(value_err)
    }

    #[getter]
    fn params(&self) -> PyResult<usize> {
        self.inner.config.param_count().map_err(value_err)
    }

    #[getter]
    fn macs(&self) -> PyResult<u64> {
        self.inner.config.mac_count().map_err(value_err)
    }

    #[getter]
    fn flops(&self) -> PyResult<u64> {
        self.inner.config.flops().map_err(value_err)
    }

    #[getter]
    fn has_fixed(&self) -> bool {
        self.inner.fixed.is_some()
    }

    #[getter]
    fn has_float(&self) -> bool {
        self.inner.float.is_some()
    }

    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.config).map_err(value_err)
    }

    /// Requantize the float weights; returns the quantization report.
    fn quantize<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let float = self.inner.float.as_ref().ok_or_else(|| value_err("model has no float weights"))?;
        let (fixed, rep) = quantize_model(float, &self.inner.config).map_err(value_err)?;
        self.inner.fixed = Some(fixed);
        to_py(py, &rep)
    }

    /// Predictions `[(x, y), ...]` and the counter report.
    #[pyo3(signature = (frames, mode="fixed", activations="deployed", sensor_coords=false))]
    fn infer<'py>(&self, py: Python<'py>, frames: &PyFrames, mode: &str, activations: &str, sensor_coords: bool) -> PyResult<Inference<'py>> {
        let mode: Mode = mode.parse().map_err(value_err)?;
        let acts = match activations {
            "deployed" => ReferenceActivations::Deployed,
            "original" => ReferenceActivations::Original,
            a => return Err(value_err(format!("unknown activations '{a}'"))),
        };
        let w = ModelWeights { fixed: self.inner.fixed.as_ref(), float: self.inner.float.as_ref() };
        let r = forward_sequence(&frames.inner, &self.inner.config, w, mode, acts, sensor_coords).map_err(value_err)?;
        Ok((r.predictions.iter().map(|p| (p.x, p.y)).collect(), to_py(py, &r.counters)?))
    }

    /// Accelerator report as a dict. `sparsity` is `"measured"` (needs
    /// frames) or `"inject=S"`.
    #[pyo3(signature = (sparsity="inject=0.4", frames=None, clock_hz=None, coefficients=None, include_leakage=false))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        sparsity: &str,
        frames: Option<&PyFrames>,
        clock_hz: Option<f64>,
        coefficients: Option<PathBuf>,
        include_leakage: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mut hw = HwConfig::default();
        if let Some(c) = clock_hz {
            hw.pe.clock_hz = c;
        }
        let coeffs = match coefficients {
            Some(p) => EnergyCoefficients::load(&p).map_err(value_err)?,
            None => EnergyCoefficients::shipped(),
        };
        let cfg = &self.inner.config;
        let source = if sparsity == "measured" {
            let f = frames.ok_or_else(|| value_err("measured sparsity needs frames"))?;
            let w = self.inner.fixed.as_ref().ok_or_else(|| value_err("measured sparsity needs fixed weights"))?;
            measure_sparsity(cfg, w, &f.inner).map_err(value_err)?
        } else {
            let s = sparsity.strip_prefix("inject=").and_then(|s| s.parse().ok()).ok_or_else(|| value_err(format!("bad sparsity '{sparsity}'")))?;
            SparsitySource::Injected(s)
        };
        let schedule = build_schedule(cfg, &hw).map_err(value_err)?;
        let rep = simulate_schedule(schedule, &hw, &source, &coeffs, SimOptions { include_leakage }).map_err(value_err)?;
        to_py(py, &rep)
    }
}

/// Round a real value to Q1.7, saturating.
#[pyfunction]
fn quantize_weight(x: f64) -> i8 {
    fixed_point::quantize_weight(x).value
}

/// Round a real value to Q5.11, saturating.
#[pyfunction]
fn quantize_activation(x: f64) -> i16 {
    fixed_point::quantize_activation(x).value
}

/// One saturating multiply-accumulate on raw values.
#[pyfunction]
fn mac(acc: i32, w: i8, a: i16) -> i32 {
    fixed_point::mac(acc, w, a).value
}

#[pyfunction]
fn hardsigmoid(x: i16) -> i16 {
    activations::hardsigmoid(x)
}

#[pyfunction]
fn hardtanh(x: i16) -> i16 {
    activations::hardtanh(x)
}

#[pyfunction]
fn default_config_json() -> PyResult<String> {
    serde_json::to_string(&ModelConfig::default()).map_err(value_err)
}

#[pymodule]
#[pyo3(name = "janeeye")]
fn janeeye_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrames>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(quantize_weight, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_activation, m)?)?;
    m.add_function(wrap_pyfunction!(mac, m)?)?;
    m.add_function(wrap_pyfunction!(hardsigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(hardtanh, m)?)?;
    m.add_function(wrap_pyfunction!(default_config_json, m)?)?;
    Ok(())
}
