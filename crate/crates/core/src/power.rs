//! Register-switching power model and attack hypotheses.
//!
//! Each PE draws `alpha * HD(Reg A) + beta * HD(Reg C)` per cycle, where HD is the
//! Hamming distance between the register's value at the end of the previous cycle
//! and at the end of this one. A trace has one sample per compute cycle: the sum
//! over all PEs plus optional Gaussian noise.

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::systolic::{psum_mask, ArrayConfig, InputBatch, RegisterTimeline};

/// Number of hypotheses for one 8-bit weight.
pub const GUESSES: usize = 256;

/// Signed weight value encoded by guess index `g` (two's complement of the byte).
#[inline]
pub fn guess_value(g: usize) -> i8 {
    g as u8 as i8
}

/// Guess index of a signed weight value.
#[inline]
pub fn guess_index(w: i8) -> usize {
    w as u8 as usize
}

/// Per-PE load coefficients for Reg A (`alpha`) and Reg C (`beta`).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCoefficients {
    rows: usize,
    cols: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl PowerCoefficients {
    pub fn new(rows: usize, cols: usize, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != rows * cols || beta.len() != rows * cols {
            return Err(Error::Shape(format!(
                "coefficient tables must hold {} entries",
                rows * cols
            )));
        }
        if alpha
            .iter()
            .chain(&beta)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Precondition(
                "power coefficients must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            alpha,
            beta,
        })
    }

    /// Forwarding PEs get `alpha = 3, beta = 2`; the last column, which drives no
    /// neighbour, gets `alpha = 1, beta = 2`. A single-column array is all last column.
    pub fn default_for(cfg: &ArrayConfig) -> Self {
        let (rows, cols) = (cfg.rows(), cfg.cols());
        let alpha = (0..rows * cols)
            .map(|i| if i % cols + 1 == cols { 1.0 } else { 3.0 })
            .collect();
        Self {
            rows,
            cols,
            alpha,
            beta: vec![2.0; rows * cols],
        }
    }

    pub fn uniform(cfg: &ArrayConfig, alpha: f64, beta: f64) -> Result<Self> {
        let n = cfg.num_pes();
        Self::new(cfg.rows(), cfg.cols(), vec![alpha; n], vec![beta; n])
    }

    pub fn alpha(&self, r: usize, c: usize) -> f64 {
        self.alpha[r * self.cols + c]
    }

    pub fn beta(&self, r: usize, c: usize) -> f64 {
        self.beta[r * self.cols + c]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    /// Same coefficients with every `alpha` set to zero (Reg C power only).
    pub fn reg_c_only(&self) -> Self {
        Self {
            alpha: vec![0.0; self.alpha.len()],
            ..self.clone()
        }
    }

    pub(crate) fn check_shape(&self, cfg: &ArrayConfig) -> Result<()> {
        if self.rows != cfg.rows() || self.cols != cfg.cols() {
            return Err(Error::Shape(format!(
                "coefficients are {}x{}, array is {}x{}",
                self.rows,
                self.cols,
                cfg.rows(),
                cfg.cols()
            )));
        }
        Ok(())
    }
}

/// Additive zero-mean Gaussian noise per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Precondition(format!(
                "noise sigma must be >= 0, got {sigma}"
            )));
        }
        Ok(Self { sigma, seed })
    }

    pub fn none() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
        }
    }

    /// Independent noise for trace `index` of a set.
    pub fn for_trace(&self, index: u64) -> Self {
        Self {
            sigma: self.sigma,
            seed: crate::rng::derive_seed(self.seed, index),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<f64>,
}

#[inline]
pub fn hamming_distance(a: i64, b: i64, mask: u64) -> u32 {
    ((a ^ b) as u64 & mask).count_ones()
}

#[inline]
pub fn hamming_weight(a: i64, mask: u64) -> u32 {
    (a as u64 & mask).count_ones()
}

/// Power drawn by PE(r, c) during cycle `t`.
pub fn pe_cycle_power(
    tl: &RegisterTimeline,
    r: usize,
    c: usize,
    t: usize,
    coeffs: &PowerCoefficients,
) -> f64 {
    let mask = tl.config().psum_mask();
    let hd_a = hamming_distance(
        i64::from(tl.reg_a_before(r, c, t) as u8),
        i64::from(tl.reg_a(r, c, t) as u8),
        0xFF,
    );
    let hd_c = hamming_distance(tl.reg_c_before(r, c, t), tl.reg_c(r, c, t), mask);
    coeffs.alpha(r, c) * f64::from(hd_a) + coeffs.beta(r, c) * f64::from(hd_c)
}

/// Sums PE power per cycle and adds seeded noise.
pub fn synthesize_trace(
    tl: &RegisterTimeline,
    coeffs: &PowerCoefficients,
    noise: &NoiseSpec,
) -> Result<Trace> {
    let cfg = tl.config();
    coeffs.check_shape(cfg)?;
    let mut samples: Vec<f64> = (0..tl.cycles())
        .map(|t| {
            let mut total = 0.0;
            for r in 0..cfg.rows() {
                for c in 0..cfg.cols() {
                    total += pe_cycle_power(tl, r, c, t, coeffs);
                }
            }
            total
        })
        .collect();
    if noise.sigma > 0.0 {
        let mut stream = Stream::new(noise.seed);
        for s in &mut samples {
            *s += noise.sigma * stream.next_gaussian();
        }
    }
    Ok(Trace { samples })
}

/// Leakage function applied to the partial sums of two consecutive vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeakageModel {
    /// Hamming distance of Reg C between vector 0 and vector 1.
    #[default]
    HammingDistance,
    /// Hamming weight of Reg C holding vector 1's partial sum.
    HammingWeight,
    /// Toggle of a single Reg C bit between vector 0 and vector 1.
    Bit(u32),
}

impl LeakageModel {
    pub fn validate(&self, psum_width: u32) -> Result<()> {
        match *self {
            LeakageModel::Bit(b) if b >= psum_width => Err(Error::Index {
                what: "bit",
                index: b as usize,
                limit: psum_width as usize,
            }),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, p0: i64, p1: i64, mask: u64) -> u8 {
        match *self {
            LeakageModel::HammingDistance => hamming_distance(p0, p1, mask) as u8,
            LeakageModel::HammingWeight => hamming_weight(p1, mask) as u8,
            LeakageModel::Bit(b) => (((p0 ^ p1) as u64 & mask) >> b) as u8 & 1,
        }
    }
}

/// `256 x N` predicted power values, one row per weight guess.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisMatrix {
    n: usize,
    data: Vec<f64>,
}

impl HypothesisMatrix {
    /// Builds the matrix from `f(guess_index, trace_index)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(GUESSES * n);
        for g in 0..GUESSES {
            for i in 0..n {
                data.push(f(g, i));
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != GUESSES {
            return Err(Error::Shape(format!(
                "hypothesis matrix needs {GUESSES} rows, got {}",
                rows.len()
            )));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("hypothesis rows have unequal length".into()));
        }
        Ok(Self {
            n,
            data: rows.concat(),
        })
    }

    pub fn traces(&self) -> usize {
        self.n
    }

    pub fn row(&self, g: usize) -> &[f64] {
        &self.data[g * self.n..(g + 1) * self.n]
    }

    pub fn get(&self, g: usize, i: usize) -> f64 {
        self.data[g * self.n + i]
    }
}

/// Partial sums of vectors 0 and 1 through `prior.len()` rows of one column.
pub(crate) fn prefix_pair(x: &InputBatch, prior: &[i8]) -> (i64, i64) {
    prior.iter().enumerate().fold((0, 0), |(p0, p1), (i, &w)| {
        (
            p0 + i64::from(x.get(0, i)) * i64::from(w),
            p1 + i64::from(x.get(1, i)) * i64::from(w),
        )
    })
}

fn check_pair(x: &InputBatch, row: usize) -> Result<()> {
    if x.batch() < 2 {
        return Err(Error::Precondition(
            "hypotheses need at least two vectors per batch".into(),
        ));
    }
    if row >= x.rows() {
        return Err(Error::Index {
            what: "row",
            index: row,
            limit: x.rows(),
        });
    }
    Ok(())
}

/// Predicted leakage of the weight at `prior.len()` (the target row) for all
/// 256 guesses, given the already-recovered weights above it in the column.
pub fn hypothesis_values(
    model: LeakageModel,
    prior: &[i8],
    x: &InputBatch,
    psum_width: u32,
) -> Result<[u8; GUESSES]> {
    let row = prior.len();
    check_pair(x, row)?;
    model.validate(psum_width)?;
    let mask = psum_mask(psum_width);
    let (pre0, pre1) = prefix_pair(x, prior);
    let (x0, x1) = (i64::from(x.get(0, row)), i64::from(x.get(1, row)));
    let mut out = [0u8; GUESSES];
    for (g, h) in out.iter_mut().enumerate() {
        let w = i64::from(guess_value(g));
        *h = model.eval(pre0 + x0 * w, pre1 + x1 * w, mask);
    }
    Ok(out)
}

fn check_known(row: usize, known: &[i8]) -> Result<()> {
    if known.len() < row {
        return Err(Error::Precondition(format!(
            "row {row} needs {row} recovered weights above it, got {}",
            known.len()
        )));
    }
    Ok(())
}

/// Hamming-distance hypotheses for the weight at `row`; `known[..row]` are the
/// recovered weights above it.
pub fn hypothesis_hd(
    row: usize,
    known: &[i8],
    x: &InputBatch,
    psum_width: u32,
) -> Result<[u8; GUESSES]> {
    check_known(row, known)?;
    hypothesis_values(LeakageModel::HammingDistance, &known[..row], x, psum_width)
}

pub fn hypothesis_hw(
    row: usize,
    known: &[i8],
    x: &InputBatch,
    psum_width: u32,
) -> Result<[u8; GUESSES]> {
    check_known(row, known)?;
    hypothesis_values(LeakageModel::HammingWeight, &known[..row], x, psum_width)
}

pub fn hypothesis_bit(
    row: usize,
    known: &[i8],
    x: &InputBatch,
    psum_width: u32,
    bit: u32,
) -> Result<[u8; GUESSES]> {
    check_known(row, known)?;
    hypothesis_values(LeakageModel::Bit(bit), &known[..row], x, psum_width)
}

/// Full `256 x N` hypothesis matrix over a set of batches.
pub fn hypothesis_matrix(
    model: LeakageModel,
    prior: &[i8],
    inputs: &[InputBatch],
    psum_width: u32,
) -> Result<HypothesisMatrix> {
    let columns = inputs
        .iter()
        .map(|x| hypothesis_values(model, prior, x, psum_width))
        .collect::<Result<Vec<_>>>()?;
    Ok(HypothesisMatrix::from_fn(inputs.len(), |g, n| {
        f64::from(columns[n][g])
    }))
}
