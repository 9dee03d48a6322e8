//! Python bindings: array geometry, trace generation and the attack family.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use systolic_sca::analysis::{model_aliasing, pe_hd_correlation_with, PeCorrelationMode};
use systolic_sca::attack::{self as atk, AttackConfig, ScoreMode, SimulatedProfiler};
use systolic_sca::power::{self, LeakageModel, NoiseSpec, PowerCoefficients};
use systolic_sca::systolic::{self, DEFAULT_PSUM_WIDTH};
use systolic_sca::trace_io::{self, SampleType};
use systolic_sca::{traces, Error};

create_exception!(systolic_sca, SystolicError, PyException);
create_exception!(systolic_sca, DegenerateAttack, SystolicError);

fn py_err(e: Error) -> PyErr {
    if e.is_degenerate() {
        DegenerateAttack::new_err(e.to_string())
    } else {
        SystolicError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for Result<T, Error> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyclass(name = "ArrayConfig", frozen, from_py_object)]
#[derive(Clone)]
struct PyArrayConfig {
    inner: systolic::ArrayConfig,
}

#[pymethods]
impl PyArrayConfig {
    #[new]
    #[pyo3(signature = (rows, cols, batch = 3, psum_width = DEFAULT_PSUM_WIDTH))]
    fn new(rows: usize, cols: usize, batch: usize, psum_width: u32) -> PyResult<Self> {
        Ok(Self {
            inner: systolic::ArrayConfig::with_psum_width(rows, cols, batch, psum_width).or_py()?,
        })
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
    fn batch(&self) -> usize {
        self.inner.batch()
    }

    #[getter]
    fn psum_width(&self) -> u32 {
        self.inner.psum_width()
    }

    #[getter]
    fn total_cycles(&self) -> usize {
        self.inner.total_cycles()
    }

    fn mac_cycle(&self, r: usize, c: usize, v: usize) -> PyResult<usize> {
        self.inner.mac_cycle(r, c, v).or_py()
    }

    fn __repr__(&self) -> String {
        format!(
            "ArrayConfig(rows={}, cols={}, batch={}, psum_width={})",
            self.inner.rows(),
            self.inner.cols(),
            self.inner.batch(),
            self.inner.psum_width()
        )
    }
}

#[pyclass(name = "TraceSet", frozen)]
struct PyTraceSet {
    inner: traces::TraceMatrix,
}

#[pymethods]
impl PyTraceSet {
    #[getter]
    fn n_traces(&self) -> usize {
        self.inner.traces()
    }

    #[getter]
    fn samples_per_trace(&self) -> usize {
        self.inner.samples_per_trace()
    }

    fn trace(&self, n: usize) -> PyResult<Vec<f64>> {
        if n >= self.inner.traces() {
            return Err(py_err(Error::Index {
                what: "trace",
                index: n,
                limit: self.inner.traces(),
            }));
        }
        Ok(self.inner.trace(n).to_vec())
    }

    /// All samples, one list per trace.
    fn samples(&self) -> Vec<Vec<f64>> {
        (0..self.inner.traces())
            .map(|n| self.inner.trace(n).to_vec())
            .collect()
    }

    /// Input batch `n` as `[vector][row]`.
    fn inputs(&self, n: usize) -> PyResult<Vec<Vec<i8>>> {
        let x = self.inner.inputs().get(n).ok_or_else(|| {
            py_err(Error::Index {
                what: "trace",
                index: n,
                limit: self.inner.traces(),
            })
        })?;
        Ok((0..x.batch()).map(|v| x.vector(v).to_vec()).collect())
    }

    fn prefix(&self, n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.prefix(n).or_py()?,
        })
    }

    fn subtract(&self, templates: &PyTraceSet) -> PyResult<Self> {
        Ok(Self {
            inner: atk::subtract_template(&self.inner, &templates.inner).or_py()?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.traces()
    }

    fn __repr__(&self) -> String {
        format!(
            "TraceSet(n_traces={}, samples_per_trace={})",
            self.inner.traces(),
            self.inner.samples_per_trace()
        )
    }
}

#[pyclass(name = "GuessChain", frozen)]
struct PyGuessChain {
    inner: atk::GuessChain,
}

#[pymethods]
impl PyGuessChain {
    /// 0-based column the chain belongs to.
    #[getter]
    fn column(&self) -> usize {
        self.inner.column
    }

    /// `(weights, score)` pairs, best first.
    #[getter]
    fn entries(&self) -> Vec<(Vec<i8>, f64)> {
        self.inner
            .entries
            .iter()
            .map(|e| (e.weights.clone(), e.score))
            .collect()
    }

    fn best(&self) -> Option<(Vec<i8>, f64)> {
        self.inner.best().map(|e| (e.weights.clone(), e.score))
    }

    /// 1-based rank of `truth`, `None` when the chain dropped it.
    fn rank_of(&self, truth: Vec<i8>) -> Option<usize> {
        self.inner.rank_of(&truth)
    }

    fn score_of(&self, truth: Vec<i8>) -> Option<f64> {
        self.inner.score_of(&truth)
    }

    fn __len__(&self) -> usize {
        self.inner.entries.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "GuessChain(column={}, entries={}, best={:?})",
            self.inner.column,
            self.inner.entries.len(),
            self.inner.best().map(|e| &e.weights)
        )
    }
}

/// Square table of coefficients, `None` where undefined.
type Grid = Vec<Vec<Option<f64>>>;

/// `(prefix size, rank)` per evaluated prefix.
type RankPoints = Vec<(usize, Option<usize>)>;

fn weights(rows: &[Vec<i8>]) -> PyResult<systolic::WeightMatrix> {
    systolic::WeightMatrix::from_rows(rows).or_py()
}

fn parse_model(model: &str) -> PyResult<LeakageModel> {
    match model {
        "hd" => Ok(LeakageModel::HammingDistance),
        "hw" => Ok(LeakageModel::HammingWeight),
        _ => model
            .strip_prefix("bit:")
            .and_then(|b| b.parse().ok())
            .map(LeakageModel::Bit)
            .ok_or_else(|| {
                SystolicError::new_err(format!(
                    "unknown leakage model {model}; use hd, hw or bit:N"
                ))
            }),
    }
}

fn attack_config(k: usize, score: &str, model: &str, psum_width: u32) -> PyResult<AttackConfig> {
    let score = match score {
        "signed" => ScoreMode::Signed,
        "abs" => ScoreMode::Absolute,
        other => {
            return Err(SystolicError::new_err(format!(
                "unknown score mode {other}; use signed or abs"
            )))
        }
    };
    Ok(AttackConfig {
        beam: k,
        score,
        model: parse_model(model)?,
        psum_width,
        ..AttackConfig::default()
    })
}

/// Final partial sums `[vector][column]` of one batch, computed by the cycle model.
#[pyfunction]
fn simulate_outputs(
    cfg: &PyArrayConfig,
    weight_rows: Vec<Vec<i8>>,
    vectors: Vec<Vec<i8>>,
) -> PyResult<Vec<Vec<i64>>> {
    let cfg = &cfg.inner;
    let w = weights(&weight_rows)?;
    let x = systolic::InputBatch::from_vectors(&vectors).or_py()?;
    let tl = systolic::simulate_batch(cfg, &w, &x).or_py()?;
    let last = cfg.rows() - 1;
    Ok((0..cfg.batch())
        .map(|v| {
            (0..cfg.cols())
                .map(|c| tl.reg_c(last, c, last + c + v))
                .collect()
        })
        .collect())
}

/// Reference matrix-vector product in `psum_width`-bit two's complement.
#[pyfunction]
#[pyo3(signature = (weight_rows, vectors, psum_width = DEFAULT_PSUM_WIDTH))]
fn mvm_oracle(
    weight_rows: Vec<Vec<i8>>,
    vectors: Vec<Vec<i8>>,
    psum_width: u32,
) -> PyResult<Vec<Vec<i64>>> {
    let x = systolic::InputBatch::from_vectors(&vectors).or_py()?;
    systolic::mvm_oracle(&weights(&weight_rows)?, &x, psum_width).or_py()
}

#[pyfunction]
fn conv_output_dims(
    w_in: usize,
    h_in: usize,
    w_filter: usize,
    h_filter: usize,
    stride: usize,
    pad: usize,
) -> PyResult<(usize, usize)> {
    systolic::conv_output_dims(w_in, h_in, w_filter, h_filter, stride, pad).or_py()
}

#[pyfunction]
#[pyo3(signature = (a, b, width = DEFAULT_PSUM_WIDTH))]
fn hamming_distance(a: i64, b: i64, width: u32) -> PyResult<u32> {
    if !(1..=64).contains(&width) {
        return Err(SystolicError::new_err(format!(
            "width must lie in 1..=64, got {width}"
        )));
    }
    let mask = if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    Ok(power::hamming_distance(a, b, mask))
}

/// Random input batches, each `[vector][row]`.
#[pyfunction]
fn gen_inputs(seed: u64, n: usize, cfg: &PyArrayConfig) -> Vec<Vec<Vec<i8>>> {
    trace_io::gen_inputs(seed, n, &cfg.inner)
        .iter()
        .map(|x| (0..x.batch()).map(|v| x.vector(v).to_vec()).collect())
        .collect()
}

/// Simulated traces on `n` random batches drawn from `seed`, with default
/// power coefficients unless `alpha` and `beta` are both given.
#[pyfunction]
#[pyo3(signature = (cfg, weight_rows, n, seed = 1, sigma = 0.0, alpha = None, beta = None))]
fn generate_traces(
    cfg: &PyArrayConfig,
    weight_rows: Vec<Vec<i8>>,
    n: usize,
    seed: u64,
    sigma: f64,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> PyResult<PyTraceSet> {
    let cfg = &cfg.inner;
    let coeffs = match (alpha, beta) {
        (Some(a), Some(b)) => PowerCoefficients::uniform(cfg, a, b).or_py()?,
        (None, None) => PowerCoefficients::default_for(cfg),
        _ => {
            return Err(SystolicError::new_err(
                "give both alpha and beta or neither",
            ))
        }
    };
    let inputs = trace_io::gen_inputs(seed, n, cfg);
    let noise = NoiseSpec::new(sigma, trace_io::noise_seed(seed)).or_py()?;
    Ok(PyTraceSet {
        inner: traces::generate_traces(cfg, &weights(&weight_rows)?, &inputs, &coeffs, &noise)
            .or_py()?,
    })
}

/// Noise-free templates from a device loaded with `weight_rows`, replaying the inputs of `target`.
#[pyfunction]
fn template_traces(
    cfg: &PyArrayConfig,
    weight_rows: Vec<Vec<i8>>,
    target: &PyTraceSet,
) -> PyResult<PyTraceSet> {
    let cfg = &cfg.inner;
    Ok(PyTraceSet {
        inner: atk::make_template_traces(
            cfg,
            &weights(&weight_rows)?,
            target.inner.inputs(),
            &PowerCoefficients::default_for(cfg),
            &NoiseSpec::none(),
        )
        .or_py()?,
    })
}

#[pyfunction]
fn read_traces(path: PathBuf) -> PyResult<PyTraceSet> {
    Ok(PyTraceSet {
        inner: trace_io::read_traces(path).or_py()?.0,
    })
}

#[pyfunction]
#[pyo3(signature = (path, traces, dtype = "f64"))]
fn write_traces(path: PathBuf, traces: &PyTraceSet, dtype: &str) -> PyResult<()> {
    let ty = match dtype {
        "f64" => SampleType::F64,
        "f32" => SampleType::F32,
        other => {
            return Err(SystolicError::new_err(format!(
                "unknown dtype {other}; use f32 or f64"
            )))
        }
    };
    trace_io::write_traces(path, &traces.inner, ty).or_py()
}

/// Chained attack on one 0-based column.
#[pyfunction]
#[pyo3(signature = (traces, col = 0, k = 50, score = "signed", model = "hd", psum_width = DEFAULT_PSUM_WIDTH))]
fn chained_column_attack(
    py: Python<'_>,
    traces: &PyTraceSet,
    col: usize,
    k: usize,
    score: &str,
    model: &str,
    psum_width: u32,
) -> PyResult<PyGuessChain> {
    let cfg = attack_config(k, score, model, psum_width)?;
    let chain = py
        .detach(|| atk::chained_column_attack(&traces.inner, col, &cfg))
        .or_py()?;
    Ok(PyGuessChain { inner: chain })
}

#[pyfunction]
#[pyo3(signature = (traces, cols, k = 50, score = "signed", model = "hd", psum_width = DEFAULT_PSUM_WIDTH))]
fn conventional_2d_attack(
    py: Python<'_>,
    traces: &PyTraceSet,
    cols: usize,
    k: usize,
    score: &str,
    model: &str,
    psum_width: u32,
) -> PyResult<Vec<PyGuessChain>> {
    let cfg = attack_config(k, score, model, psum_width)?;
    let chains = py
        .detach(|| atk::conventional_2d_attack(&traces.inner, cols, &cfg))
        .or_py()?;
    Ok(chains
        .into_iter()
        .map(|inner| PyGuessChain { inner })
        .collect())
}

/// Multi-phase template attack with a noise-free simulated profiler. Returns
/// the recovered weight rows and the chain of every phase in attack order.
#[pyfunction]
#[pyo3(signature = (traces, cfg, k = 50, profile_sigma = 0.0, profile_seed = 2))]
fn multiphase_attack(
    py: Python<'_>,
    traces: &PyTraceSet,
    cfg: &PyArrayConfig,
    k: usize,
    profile_sigma: f64,
    profile_seed: u64,
) -> PyResult<(Vec<Vec<i8>>, Vec<PyGuessChain>)> {
    let array = cfg.inner;
    let attack = attack_config(k, "signed", "hd", array.psum_width())?;
    let noise = NoiseSpec::new(profile_sigma, trace_io::noise_seed(profile_seed)).or_py()?;
    let profiler =
        SimulatedProfiler::new(array, PowerCoefficients::default_for(&array), noise).or_py()?;
    let outcome = py
        .detach(|| atk::multiphase_attack(&traces.inner, &array, &attack, &profiler))
        .or_py()?;
    let chains = outcome
        .phases
        .into_iter()
        .map(|p| PyGuessChain { inner: p.chain })
        .collect();
    Ok((outcome.weights.to_rows(), chains))
}

/// Measurements-to-disclosure sweep; returns `(mtd, [(traces, rank)])`.
#[pyfunction]
#[pyo3(signature = (traces, truth, col = 0, step = 10_000, k = 50, psum_width = DEFAULT_PSUM_WIDTH))]
fn mtd_sweep(
    py: Python<'_>,
    traces: &PyTraceSet,
    truth: Vec<i8>,
    col: usize,
    step: usize,
    k: usize,
    psum_width: u32,
) -> PyResult<(Option<usize>, RankPoints)> {
    let cfg = attack_config(k, "signed", "hd", psum_width)?;
    let report = py
        .detach(|| {
            atk::mtd_sweep(&traces.inner, step, &truth, |t| {
                atk::chained_column_attack(t, col, &cfg)
            })
        })
        .or_py()?;
    Ok((report.mtd, report.points))
}

/// 256x256 aliasing map of the weight below `prior`, over `n` random batches.
#[pyfunction]
#[pyo3(signature = (prior, n = 10_000, seed = 1, model = "hd", psum_width = DEFAULT_PSUM_WIDTH, batch = 3))]
fn aliasing_map(
    prior: Vec<i8>,
    n: usize,
    seed: u64,
    model: &str,
    psum_width: u32,
    batch: usize,
) -> PyResult<(Grid, Option<f64>)> {
    let cfg =
        systolic::ArrayConfig::with_psum_width(prior.len() + 1, 1, batch, psum_width).or_py()?;
    let inputs = trace_io::gen_inputs(seed, n, &cfg);
    let map = model_aliasing(&prior, &inputs, parse_model(model)?, psum_width).or_py()?;
    let cells = (0..power::GUESSES)
        .map(|g| (0..power::GUESSES).map(|h| map.get(g, h)).collect())
        .collect();
    Ok((cells, map.median_off_diagonal_abs()))
}

/// PE-by-PE Reg C switching correlation, indexed by row-major PE number - 1.
#[pyfunction]
#[pyo3(signature = (cfg, weight_rows, n = 100_000, seed = 1, cycles = "busiest"))]
fn pe_hd_correlation(
    cfg: &PyArrayConfig,
    weight_rows: Vec<Vec<i8>>,
    n: usize,
    seed: u64,
    cycles: &str,
) -> PyResult<Grid> {
    let mode = match cycles {
        "busiest" => PeCorrelationMode::BusiestCycle,
        "shared" => PeCorrelationMode::StrongestSharedCycle,
        other => {
            return Err(SystolicError::new_err(format!(
                "unknown cycle choice {other}; use busiest or shared"
            )))
        }
    };
    let inputs = trace_io::gen_inputs(seed, n, &cfg.inner);
    let table =
        pe_hd_correlation_with(&cfg.inner, &weights(&weight_rows)?, &inputs, mode).or_py()?;
    let pes = table.num_pes();
    Ok((0..pes)
        .map(|p| (0..pes).map(|q| table.get(p, q)).collect())
        .collect())
}

#[pymodule]
#[pyo3(name = "systolic_sca")]
fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SystolicError", m.py().get_type::<SystolicError>())?;
    m.add("DegenerateAttack", m.py().get_type::<DegenerateAttack>())?;
    m.add_class::<PyArrayConfig>()?;
    m.add_class::<PyTraceSet>()?;
    m.add_class::<PyGuessChain>()?;
    m.add_function(wrap_pyfunction!(simulate_outputs, m)?)?;
    m.add_function(wrap_pyfunction!(mvm_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(conv_output_dims, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_distance, m)?)?;
    m.add_function(wrap_pyfunction!(gen_inputs, m)?)?;
    m.add_function(wrap_pyfunction!(generate_traces, m)?)?;
    m.add_function(wrap_pyfunction!(template_traces, m)?)?;
    m.add_function(wrap_pyfunction!(read_traces, m)?)?;
    m.add_function(wrap_pyfunction!(write_traces, m)?)?;
    m.add_function(wrap_pyfunction!(chained_column_attack, m)?)?;
    m.add_function(wrap_pyfunction!(conventional_2d_attack, m)?)?;
    m.add_function(wrap_pyfunction!(multiphase_attack, m)?)?;
    m.add_function(wrap_pyfunction!(mtd_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(aliasing_map, m)?)?;
    m.add_function(wrap_pyfunction!(pe_hd_correlation, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
