//! Template-based DPA: a profiled copy of the device, loaded with chosen weights,
//! replays the target's inputs; its traces are subtracted from the target's to
//! strip power that does not depend on the weights still under attack.

use std::sync::atomic::{AtomicU64, Ordering};

use super::chain::{chained_column_attack, conventional_2d_attack, AttackConfig, GuessChain};
use crate::error::{Error, Result};
use crate::power::{NoiseSpec, PowerCoefficients};
use crate::systolic::{ArrayConfig, InputBatch, WeightMatrix};
use crate::traces::{generate_traces, TraceMatrix};

/// Source of template traces: a device the attacker controls.
pub trait Profiler {
    /// One template trace per input batch, with `weights` loaded.
    fn templates(&self, weights: &WeightMatrix, inputs: &[InputBatch]) -> Result<TraceMatrix>;
}

/// Profiler backed by the power simulator. Each call is one profiling campaign
/// with its own noise sub-stream.
#[derive(Debug)]
pub struct SimulatedProfiler {
    cfg: ArrayConfig,
    coeffs: PowerCoefficients,
    noise: NoiseSpec,
    campaigns: AtomicU64,
}

impl SimulatedProfiler {
    pub fn new(cfg: ArrayConfig, coeffs: PowerCoefficients, noise: NoiseSpec) -> Result<Self> {
        coeffs.check_shape(&cfg)?;
        Ok(Self {
            cfg,
            coeffs,
            noise,
            campaigns: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.cfg
    }
}

impl Profiler for SimulatedProfiler {
    fn templates(&self, weights: &WeightMatrix, inputs: &[InputBatch]) -> Result<TraceMatrix> {
        let campaign = self.campaigns.fetch_add(1, Ordering::Relaxed);
        let noise = NoiseSpec {
            sigma: self.noise.sigma,
            seed: crate::rng::derive_seed(self.noise.seed, u64::MAX - campaign),
        };
        make_template_traces(&self.cfg, weights, inputs, &self.coeffs, &noise)
    }
}

/// Simulates the profiled device with `profile_weights` on the target's inputs.
pub fn make_template_traces(
    cfg: &ArrayConfig,
    profile_weights: &WeightMatrix,
    inputs: &[InputBatch],
    coeffs: &PowerCoefficients,
    noise: &NoiseSpec,
) -> Result<TraceMatrix> {
    generate_traces(cfg, profile_weights, inputs, coeffs, noise)
}

/// `target - templates`, sample by sample. Both sets must share their inputs.
pub fn subtract_template(target: &TraceMatrix, templates: &TraceMatrix) -> Result<TraceMatrix> {
    if target.traces() != templates.traces()
        || target.samples_per_trace() != templates.samples_per_trace()
    {
        return Err(Error::Alignment(format!(
            "target is {}x{}, templates are {}x{}",
            target.traces(),
            target.samples_per_trace(),
            templates.traces(),
            templates.samples_per_trace()
        )));
    }
    if let Some(n) = (0..target.traces()).find(|&n| target.inputs()[n] != templates.inputs()[n]) {
        return Err(Error::Alignment(format!(
            "input batch {n} differs between target and templates"
        )));
    }
    let residual = target
        .samples()
        .iter()
        .zip(templates.samples())
        .map(|(a, b)| a - b)
        .collect();
    TraceMatrix::new(
        target.samples_per_trace(),
        residual,
        target.inputs().to_vec(),
    )
}

/// Single-profile template DPA: subtract zero-weight templates, then attack every
/// column independently.
pub fn template_2d_attack(
    traces: &TraceMatrix,
    cols: usize,
    cfg: &AttackConfig,
    profiler: &dyn Profiler,
) -> Result<Vec<GuessChain>> {
    let rows = traces.inputs()[0].rows();
    let templates = profiler.templates(&WeightMatrix::zeros(rows, cols), traces.inputs())?;
    conventional_2d_attack(&subtract_template(traces, &templates)?, cols, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub column: usize,
    pub chain: GuessChain,
}

/// Recovered weights plus the chain of every completed phase, in attack order.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiphaseOutcome {
    pub weights: WeightMatrix,
    pub recovered: Vec<usize>,
    pub phases: Vec<PhaseOutcome>,
}

/// Multi-phase template DPA, attacking columns from the right edge leftwards.
pub fn multiphase_attack(
    traces: &TraceMatrix,
    array: &ArrayConfig,
    cfg: &AttackConfig,
    profiler: &dyn Profiler,
) -> Result<MultiphaseOutcome> {
    let order: Vec<usize> = (0..array.cols()).rev().collect();
    multiphase_attack_in_order(traces, array, cfg, profiler, &order)
}

/// Multi-phase template DPA with an explicit column order. Phase `k` subtracts
/// templates that carry every column recovered so far (all others zero) and
/// attacks `order[k]`. The first phase runs on the raw traces.
pub fn multiphase_attack_in_order(
    traces: &TraceMatrix,
    array: &ArrayConfig,
    cfg: &AttackConfig,
    profiler: &dyn Profiler,
    order: &[usize],
) -> Result<MultiphaseOutcome> {
    if let Some(&c) = order.iter().find(|&&c| c >= array.cols()) {
        return Err(Error::Index {
            what: "column",
            index: c,
            limit: array.cols(),
        });
    }
    if traces.inputs()[0].rows() != array.rows() {
        return Err(Error::Shape(format!(
            "traces come from {} rows, array has {}",
            traces.inputs()[0].rows(),
            array.rows()
        )));
    }
    let mut outcome = MultiphaseOutcome {
        weights: WeightMatrix::zeros(array.rows(), array.cols()),
        recovered: Vec::new(),
        phases: Vec::new(),
    };
    for &column in order {
        let result = if outcome.recovered.is_empty() {
            chained_column_attack(traces, column, cfg)
        } else {
            profiler
                .templates(&outcome.weights, traces.inputs())
                .and_then(|templates| subtract_template(traces, &templates))
                .and_then(|residual| chained_column_attack(&residual, column, cfg))
        };
        let chain = match result {
            Ok(chain) if chain.best().is_some_and(|e| e.score.is_finite()) => chain,
            Ok(_) => {
                return Err(Error::PhaseFailure {
                    column,
                    partial: Box::new(outcome),
                    source: Box::new(Error::Degenerate("no candidate has a defined score".into())),
                })
            }
            Err(e) => {
                return Err(Error::PhaseFailure {
                    column,
                    partial: Box::new(outcome),
                    source: Box::new(e),
                })
            }
        };
        let best = chain.best().expect("checked above").weights.clone();
        outcome.weights.set_column(column, &best);
        outcome.recovered.push(column);
        outcome.phases.push(PhaseOutcome { column, chain });
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_io::gen_inputs;
    use std::cell::Cell;

    struct Counting<'a> {
        inner: &'a SimulatedProfiler,
        calls: Cell<usize>,
    }

    impl Profiler for Counting<'_> {
        fn templates(&self, weights: &WeightMatrix, inputs: &[InputBatch]) -> Result<TraceMatrix> {
            self.calls.set(self.calls.get() + 1);
            self.inner.templates(weights, inputs)
        }
    }

    fn setup(w: &[Vec<i8>], n: usize) -> (ArrayConfig, TraceMatrix, SimulatedProfiler) {
        let weights = WeightMatrix::from_rows(w).unwrap();
        let cfg = ArrayConfig::new(weights.rows(), weights.cols(), 3).unwrap();
        let coeffs = PowerCoefficients::default_for(&cfg);
        let traces = generate_traces(
            &cfg,
            &weights,
            &gen_inputs(9, n, &cfg),
            &coeffs,
            &NoiseSpec::none(),
        )
        .unwrap();
        let profiler = SimulatedProfiler::new(cfg, coeffs, NoiseSpec::none()).unwrap();
        (cfg, traces, profiler)
    }

    #[test]
    fn single_pe_needs_no_templates() {
        let (cfg, traces, sim) = setup(&[vec![-77]], 2000);
        let counting = Counting {
            inner: &sim,
            calls: Cell::new(0),
        };
        let out = multiphase_attack(&traces, &cfg, &AttackConfig::default(), &counting).unwrap();
        assert_eq!(counting.calls.get(), 0);
        assert_eq!(out.weights.get(0, 0), -77);
        assert_eq!(out.recovered, vec![0]);
    }

    #[test]
    fn subtracting_true_templates_leaves_nothing() {
        let (cfg, traces, sim) = setup(&[vec![5, -9], vec![100, 3]], 50);
        let w = WeightMatrix::from_rows(&[vec![5, -9], vec![100, 3]]).unwrap();
        let residual =
            subtract_template(&traces, &sim.templates(&w, traces.inputs()).unwrap()).unwrap();
        assert!(residual.samples().iter().all(|&s| s == 0.0));
        assert_eq!(cfg.cols(), 2);
    }

    #[test]
    fn misaligned_templates_are_rejected() {
        let (cfg, traces, sim) = setup(&[vec![5, -9], vec![100, 3]], 50);
        let other = gen_inputs(10, 50, &cfg);
        let templates = sim.templates(&WeightMatrix::zeros(2, 2), &other).unwrap();
        assert!(matches!(
            subtract_template(&traces, &templates),
            Err(Error::Alignment(_))
        ));
        let short = sim
            .templates(&WeightMatrix::zeros(2, 2), &traces.inputs()[..10])
            .unwrap();
        assert!(matches!(
            subtract_template(&traces, &short),
            Err(Error::Alignment(_))
        ));
    }

    struct Broken;

    impl Profiler for Broken {
        fn templates(&self, _: &WeightMatrix, _: &[InputBatch]) -> Result<TraceMatrix> {
            Err(Error::Precondition("profiling device offline".into()))
        }
    }

    #[test]
    fn phase_failure_carries_partial_result() {
        let (cfg, traces, _) = setup(&[vec![5, -9], vec![100, 3]], 3000);
        let err = multiphase_attack(&traces, &cfg, &AttackConfig::default(), &Broken);
        if let Err(Error::PhaseFailure {
            column,
            partial,
            source,
        }) = &err
        {
            assert_eq!(*column, 0);
            assert_eq!(partial.recovered, vec![1]);
            assert_eq!(partial.weights.column(1), vec![-9, 3]);
            assert!(matches!(**source, Error::Precondition(_)));
        } else {
            panic!("expected a phase failure, got {err:?}");
        }
        assert!(err.unwrap_err().is_degenerate());
        assert!(
            multiphase_attack_in_order(&traces, &cfg, &AttackConfig::default(), &Broken, &[2])
                .is_err()
        );
    }
}
