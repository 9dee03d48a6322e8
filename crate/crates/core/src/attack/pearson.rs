use crate::error::{Error, Result};
use crate::power::{HypothesisMatrix, GUESSES};
use crate::traces::TraceMatrix;

/// Pearson coefficients, one row per guess and one column per sample.
/// `None` marks cells where either series has zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    samples: usize,
    rho: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn new(samples: usize, rho: Vec<Option<f64>>) -> Result<Self> {
        if rho.len() != GUESSES * samples {
            return Err(Error::Shape(format!(
                "correlation matrix needs {} cells",
                GUESSES * samples
            )));
        }
        Ok(Self { samples, rho })
    }

    pub fn guesses(&self) -> usize {
        GUESSES
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn get(&self, g: usize, t: usize) -> Option<f64> {
        self.rho[g * self.samples + t]
    }

    pub fn row(&self, g: usize) -> &[Option<f64>] {
        &self.rho[g * self.samples..(g + 1) * self.samples]
    }

    /// A row is undefined when none of its samples carries a coefficient.
    pub fn row_defined(&self, g: usize) -> bool {
        self.row(g).iter().any(Option::is_some)
    }
}

/// Mean-removed copy of a series with its sum of squares.
#[derive(Debug, Clone)]
pub(crate) struct Centered {
    pub values: Vec<f64>,
    pub sum_sq: f64,
}

impl Centered {
    pub fn new(series: &[f64]) -> Self {
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let values: Vec<f64> = series.iter().map(|v| v - mean).collect();
        let sum_sq = values.iter().map(|v| v * v).sum();
        Self { values, sum_sq }
    }

    pub fn corr(&self, other: &Centered) -> Option<f64> {
        if self.sum_sq <= 0.0 || other.sum_sq <= 0.0 {
            return None;
        }
        let cross: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Some(clamp_unit(cross / (self.sum_sq * other.sum_sq).sqrt()))
    }

    /// Correlation with an integer-valued series summarised by its sums:
    /// `sum_h = sum h`, `sum_hh = sum h^2`, `cross = sum h * centered`.
    #[inline]
    pub fn corr_from_sums(&self, n: usize, sum_h: u64, sum_hh: u64, cross: f64) -> Option<f64> {
        // n * sum (h - mean)^2, exact in integers.
        let scaled_var =
            i128::from(n as u64) * i128::from(sum_hh) - i128::from(sum_h) * i128::from(sum_h);
        if scaled_var <= 0 || self.sum_sq <= 0.0 {
            return None;
        }
        let var_h = scaled_var as f64 / n as f64;
        Some(clamp_unit(cross / (var_h * self.sum_sq).sqrt()))
    }
}

#[inline]
fn clamp_unit(r: f64) -> f64 {
    r.clamp(-1.0, 1.0)
}

/// Correlates every hypothesis row with every trace sample column.
pub fn pearson_corr(hyp: &HypothesisMatrix, traces: &TraceMatrix) -> Result<CorrelationMatrix> {
    let n = traces.traces();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if hyp.traces() != n {
        return Err(Error::Shape(format!(
            "hypothesis matrix covers {} traces, trace matrix has {n}",
            hyp.traces()
        )));
    }
    let columns: Vec<Centered> = (0..traces.samples_per_trace())
        .map(|t| Centered::new(&traces.column(t)))
        .collect();
    let mut rho = Vec::with_capacity(GUESSES * columns.len());
    for g in 0..GUESSES {
        let row = Centered::new(hyp.row(g));
        rho.extend(columns.iter().map(|col| row.corr(col)));
    }
    CorrelationMatrix::new(columns.len(), rho)
}
