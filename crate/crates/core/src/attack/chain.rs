//! Chained per-column DPA.
//!
//! The first weight of a column leaks only through a product, whose hypotheses
//! alias heavily, so it cannot be ranked reliably on its own. The attack keeps
//! the top `K` first-weight guesses and, for each, extends the chain one row at a
//! time with the best-correlating guess for the next weight. The chains are then
//! ranked by the correlation of their last step.

use std::cmp::Ordering;
use std::ops::Range;

use rayon::prelude::*;

use super::pearson::Centered;
use crate::error::{Error, Result};
use crate::power::{guess_value, LeakageModel, GUESSES};
use crate::systolic::psum_mask;
use crate::traces::TraceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// Largest signed coefficient.
    #[default]
    Signed,
    /// Largest coefficient magnitude.
    Absolute,
}

/// Samples examined for each target row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Window {
    /// One sample per cycle: the weight at (row, col) is scored on sample
    /// `row + col + 1`, where its Reg C switches from vector 0 to vector 1.
    #[default]
    Cycle,
    /// Explicit sample ranges, one per row (for oversampled or measured traces).
    Samples(Vec<Range<usize>>),
}

impl Window {
    pub fn samples_for(&self, row: usize, col: usize, trace_len: usize) -> Result<Range<usize>> {
        let range = match self {
            Window::Cycle => {
                let t = row + col + 1;
                t..t + 1
            }
            Window::Samples(ranges) => ranges.get(row).cloned().ok_or_else(|| {
                Error::Precondition(format!("no sample window given for row {row}"))
            })?,
        };
        if range.is_empty() || range.end > trace_len {
            return Err(Error::Precondition(format!(
                "window {range:?} for row {row} is empty or exceeds trace length {trace_len}"
            )));
        }
        Ok(range)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// Number of first-weight guesses carried through the chain.
    pub beam: usize,
    pub window: Window,
    pub score: ScoreMode,
    pub model: LeakageModel,
    pub psum_width: u32,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            beam: 50,
            window: Window::Cycle,
            score: ScoreMode::Signed,
            model: LeakageModel::HammingDistance,
            psum_width: crate::systolic::DEFAULT_PSUM_WIDTH,
        }
    }
}

impl AttackConfig {
    pub fn with_beam(mut self, beam: usize) -> Self {
        self.beam = beam;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=GUESSES).contains(&self.beam) {
            return Err(Error::Precondition(format!(
                "beam width must lie in 1..=256, got {}",
                self.beam
            )));
        }
        self.model.validate(self.psum_width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainEntry {
    /// One recovered weight per row, top to bottom.
    pub weights: Vec<i8>,
    /// Correlation of the last step; `-inf` when undefined.
    pub score: f64,
}

/// Ranked weight-column candidates, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessChain {
    pub column: usize,
    pub capacity: usize,
    pub entries: Vec<ChainEntry>,
}

impl GuessChain {
    pub fn best(&self) -> Option<&ChainEntry> {
        self.entries.first()
    }

    /// 1-based rank of `truth` in the chain, `None` when it was not retained.
    pub fn rank_of(&self, truth: &[i8]) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.weights == truth)
            .map(|i| i + 1)
    }

    pub fn score_of(&self, truth: &[i8]) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.weights == truth)
            .map(|e| e.score)
    }
}

fn rank_order(a_score: f64, a_w: &[i8], b_score: f64, b_w: &[i8]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_w.cmp(b_w))
}

/// Per-guess sums over all traces: `sum h`, `sum h^2` and, per window sample,
/// `sum h * centered sample`.
struct GuessSums {
    sum_h: [u64; GUESSES],
    sum_hh: [u64; GUESSES],
    cross: Vec<[f64; GUESSES]>,
}

/// Scores all 256 guesses of the weight directly below `prior` in its column.
/// Undefined correlations score `-inf`.
pub(crate) fn score_guesses(
    traces: &TraceMatrix,
    prior: &[i8],
    columns: &[Centered],
    cfg: &AttackConfig,
) -> [f64; GUESSES] {
    let mut sums = GuessSums {
        sum_h: [0; GUESSES],
        sum_hh: [0; GUESSES],
        cross: vec![[0.0; GUESSES]; columns.len()],
    };
    accumulate(traces, prior, columns, cfg, &mut sums);
    let n = traces.traces();
    std::array::from_fn(|g| {
        sums.cross
            .iter()
            .zip(columns)
            .filter_map(|(acc, column)| {
                column.corr_from_sums(n, sums.sum_h[g], sums.sum_hh[g], acc[g])
            })
            .map(|r| match cfg.score {
                ScoreMode::Signed => r,
                ScoreMode::Absolute => r.abs(),
            })
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

fn accumulate(
    traces: &TraceMatrix,
    prior: &[i8],
    columns: &[Centered],
    cfg: &AttackConfig,
    sums: &mut GuessSums,
) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2")
            && std::is_x86_feature_detected!("fma")
            && std::is_x86_feature_detected!("popcnt")
        {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { accumulate_avx2(traces, prior, columns, cfg, sums) };
            return;
        }
    }
    accumulate_by_model(traces, prior, columns, cfg, sums);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma,popcnt")]
unsafe fn accumulate_avx2(
    traces: &TraceMatrix,
    prior: &[i8],
    columns: &[Centered],
    cfg: &AttackConfig,
    sums: &mut GuessSums,
) {
    accumulate_by_model(traces, prior, columns, cfg, sums);
}

#[inline(always)]
fn accumulate_by_model(
    traces: &TraceMatrix,
    prior: &[i8],
    columns: &[Centered],
    cfg: &AttackConfig,
    sums: &mut GuessSums,
) {
    if cfg.psum_width <= 32 {
        // The low 32 bits of a two's-complement sum depend only on the low 32
        // bits of its terms, so wrapping u32 arithmetic is exact here.
        let mask = psum_mask(cfg.psum_width) as u32;
        match cfg.model {
            LeakageModel::HammingDistance => {
                accumulate_with(traces, prior, columns, sums, |a: u32, b: u32| {
                    ((a ^ b) & mask).count_ones()
                })
            }
            LeakageModel::HammingWeight => {
                accumulate_with(traces, prior, columns, sums, |_: u32, b: u32| {
                    (b & mask).count_ones()
                })
            }
            LeakageModel::Bit(bit) => {
                accumulate_with(traces, prior, columns, sums, |a: u32, b: u32| {
                    ((a ^ b) >> bit) & 1
                })
            }
        }
    } else {
        let mask = psum_mask(cfg.psum_width);
        match cfg.model {
            LeakageModel::HammingDistance => {
                accumulate_with(traces, prior, columns, sums, |a: u64, b: u64| {
                    ((a ^ b) & mask).count_ones()
                })
            }
            LeakageModel::HammingWeight => {
                accumulate_with(traces, prior, columns, sums, |_: u64, b: u64| {
                    (b & mask).count_ones()
                })
            }
            LeakageModel::Bit(bit) => {
                accumulate_with(traces, prior, columns, sums, |a: u64, b: u64| {
                    (((a ^ b) >> bit) & 1) as u32
                })
            }
        }
    }
}

/// Register word used by the kernel.
trait Word: Copy {
    fn from_i64(v: i64) -> Self;
    fn mul_add(self, x: Self, w: Self) -> Self;
}

impl Word for u32 {
    #[inline(always)]
    fn from_i64(v: i64) -> Self {
        v as u32
    }
    #[inline(always)]
    fn mul_add(self, x: Self, w: Self) -> Self {
        self.wrapping_add(x.wrapping_mul(w))
    }
}

impl Word for u64 {
    #[inline(always)]
    fn from_i64(v: i64) -> Self {
        v as u64
    }
    #[inline(always)]
    fn mul_add(self, x: Self, w: Self) -> Self {
        self.wrapping_add(x.wrapping_mul(w))
    }
}

#[inline(always)]
fn accumulate_with<W: Word>(
    traces: &TraceMatrix,
    prior: &[i8],
    columns: &[Centered],
    sums: &mut GuessSums,
    leak: impl Fn(W, W) -> u32,
) {
    let row = prior.len();
    let weights: [W; GUESSES] = std::array::from_fn(|g| W::from_i64(i64::from(guess_value(g))));
    let mut h = [0u32; GUESSES];
    let mut hf = [0f64; GUESSES];
    for (i, x) in traces.inputs().iter().enumerate() {
        let (pre0, pre1) = crate::power::prefix_pair(x, prior);
        let (pre0, pre1) = (W::from_i64(pre0), W::from_i64(pre1));
        let (x0, x1) = (
            W::from_i64(i64::from(x.get(0, row))),
            W::from_i64(i64::from(x.get(1, row))),
        );
        for g in 0..GUESSES {
            h[g] = leak(pre0.mul_add(x0, weights[g]), pre1.mul_add(x1, weights[g]));
        }
        for g in 0..GUESSES {
            let v = u64::from(h[g]);
            sums.sum_h[g] += v;
            sums.sum_hh[g] += v * v;
            hf[g] = f64::from(h[g]);
        }
        for (acc, column) in sums.cross.iter_mut().zip(columns) {
            let y = column.values[i];
            for g in 0..GUESSES {
                acc[g] += hf[g] * y;
            }
        }
    }
}

/// Best guess for one step; ties go to the smaller signed value.
fn best_guess(scores: &[f64; GUESSES]) -> (i8, f64) {
    (0..GUESSES)
        .map(|g| (guess_value(g), scores[g]))
        .min_by(|a, b| rank_order(a.1, &[a.0], b.1, &[b.0]))
        .expect("256 guesses")
}

/// Centered sample columns of the window for (row, col).
fn window_columns(
    traces: &TraceMatrix,
    row: usize,
    col: usize,
    cfg: &AttackConfig,
) -> Result<Vec<Centered>> {
    let range = cfg
        .window
        .samples_for(row, col, traces.samples_per_trace())?;
    Ok(range.map(|t| Centered::new(&traces.column(t))).collect())
}

/// Recovers the weights of column `col` with the chained attack.
pub fn chained_column_attack(
    traces: &TraceMatrix,
    col: usize,
    cfg: &AttackConfig,
) -> Result<GuessChain> {
    cfg.validate()?;
    let n = traces.traces();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let first = &traces.inputs()[0];
    if first.batch() < 2 {
        return Err(Error::Precondition(
            "the attack needs at least two vectors per batch".into(),
        ));
    }
    let rows = first.rows();

    let columns = window_columns(traces, 0, col, cfg)?;
    let scores = score_guesses(traces, &[], &columns, cfg);
    if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
        return Err(Error::Degenerate(format!(
            "no guess for the first weight of column {col} has a defined correlation"
        )));
    }
    let mut entries: Vec<ChainEntry> = (0..GUESSES)
        .map(|g| ChainEntry {
            weights: vec![guess_value(g)],
            score: scores[g],
        })
        .collect();
    entries.sort_by(|a, b| rank_order(a.score, &a.weights, b.score, &b.weights));
    entries.truncate(cfg.beam);

    for row in 1..rows {
        let columns = window_columns(traces, row, col, cfg)?;
        entries = entries
            .into_par_iter()
            .map(|mut entry| {
                let scores = score_guesses(traces, &entry.weights, &columns, cfg);
                let (w, score) = best_guess(&scores);
                entry.weights.push(w);
                entry.score = score;
                entry
            })
            .collect();
    }
    entries.sort_by(|a, b| rank_order(a.score, &a.weights, b.score, &b.weights));
    Ok(GuessChain {
        column: col,
        capacity: cfg.beam,
        entries,
    })
}

/// Independent chained attacks on every column of the raw traces.
pub fn conventional_2d_attack(
    traces: &TraceMatrix,
    cols: usize,
    cfg: &AttackConfig,
) -> Result<Vec<GuessChain>> {
    (0..cols)
        .map(|c| chained_column_attack(traces, c, cfg))
        .collect()
}
