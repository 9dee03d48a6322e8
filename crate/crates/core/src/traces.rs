//! Trace sets: `N x T` power samples aligned with the input batches that produced them.

use crate::error::{Error, Result};
use crate::power::{synthesize_trace, NoiseSpec, PowerCoefficients};
use crate::systolic::{simulate_batch, ArrayConfig, InputBatch, WeightMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMatrix {
    samples_per_trace: usize,
    samples: Vec<f64>,
    inputs: Vec<InputBatch>,
}

impl TraceMatrix {
    /// `samples` is row-major, one row of `samples_per_trace` values per input batch.
    pub fn new(
        samples_per_trace: usize,
        samples: Vec<f64>,
        inputs: Vec<InputBatch>,
    ) -> Result<Self> {
        if inputs.is_empty() || samples_per_trace == 0 {
            return Err(Error::Shape(
                "trace matrix must hold at least one sample".into(),
            ));
        }
        if samples.len() != inputs.len() * samples_per_trace {
            return Err(Error::Shape(format!(
                "{} samples do not form {} traces of {samples_per_trace}",
                samples.len(),
                inputs.len()
            )));
        }
        let (b, r) = (inputs[0].batch(), inputs[0].rows());
        if inputs.iter().any(|x| x.batch() != b || x.rows() != r) {
            return Err(Error::Shape("input batches have mixed shapes".into()));
        }
        Ok(Self {
            samples_per_trace,
            samples,
            inputs,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, inputs: Vec<InputBatch>) -> Result<Self> {
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::Shape("traces have unequal length".into()));
        }
        if rows.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "{} traces but {} input batches",
                rows.len(),
                inputs.len()
            )));
        }
        Self::new(t, rows.concat(), inputs)
    }

    pub fn traces(&self) -> usize {
        self.inputs.len()
    }

    pub fn samples_per_trace(&self) -> usize {
        self.samples_per_trace
    }

    pub fn inputs(&self) -> &[InputBatch] {
        &self.inputs
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn trace(&self, n: usize) -> &[f64] {
        &self.samples[n * self.samples_per_trace..(n + 1) * self.samples_per_trace]
    }

    pub fn get(&self, n: usize, t: usize) -> f64 {
        self.samples[n * self.samples_per_trace + t]
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        self.samples
            .iter()
            .skip(t)
            .step_by(self.samples_per_trace)
            .copied()
            .collect()
    }

    /// The first `n` traces.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.traces() {
            return Err(Error::Index {
                what: "prefix length",
                index: n,
                limit: self.traces() + 1,
            });
        }
        Ok(Self {
            samples_per_trace: self.samples_per_trace,
            samples: self.samples[..n * self.samples_per_trace].to_vec(),
            inputs: self.inputs[..n].to_vec(),
        })
    }

    /// Applies `f` to every sample.
    pub fn map_samples(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| f(s)).collect(),
            ..self.clone()
        }
    }
}

/// Simulates `weights` on every batch and synthesizes one trace per batch.
/// Trace `n` draws its noise from sub-stream `n` of `noise.seed`.
pub fn generate_traces(
    cfg: &ArrayConfig,
    weights: &WeightMatrix,
    inputs: &[InputBatch],
    coeffs: &PowerCoefficients,
    noise: &NoiseSpec,
) -> Result<TraceMatrix> {
    weights.check_shape(cfg)?;
    coeffs.check_shape(cfg)?;
    let t = cfg.total_cycles();
    let mut samples = Vec::with_capacity(inputs.len() * t);
    for (n, x) in inputs.iter().enumerate() {
        let tl = simulate_batch(cfg, weights, x)?;
        samples.extend(synthesize_trace(&tl, coeffs, &noise.for_trace(n as u64))?.samples);
    }
    TraceMatrix::new(t, samples, inputs.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        let x = InputBatch::zeros(3, 3);
        assert!(TraceMatrix::new(7, vec![0.0; 6], vec![x.clone()]).is_err());
        assert!(TraceMatrix::new(7, vec![], vec![]).is_err());
        assert!(
            TraceMatrix::new(1, vec![0.0; 2], vec![x.clone(), InputBatch::zeros(2, 3)]).is_err()
        );
        let m = TraceMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![x.clone(), x])
            .unwrap();
        assert_eq!(m.column(1), vec![2.0, 4.0]);
        assert_eq!(m.prefix(1).unwrap().trace(0), &[1.0, 2.0]);
        assert!(m.prefix(3).is_err());
    }
}
