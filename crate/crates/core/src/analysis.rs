//! Diagnostics for why attacks succeed or fail: aliasing between hypotheses and
//! correlated Reg C switching across PEs.

use crate::attack::Centered;
use crate::error::{Error, Result};
use crate::power::{hamming_distance, hypothesis_matrix, LeakageModel, GUESSES};
use crate::systolic::{simulate_batch, ArrayConfig, InputBatch, WeightMatrix};

/// Pairwise Pearson correlation between the 256 hypothesis rows of one weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasingMap {
    cells: Vec<Option<f64>>,
}

impl AliasingMap {
    pub fn get(&self, g: usize, h: usize) -> Option<f64> {
        self.cells[g * GUESSES + h]
    }

    /// Median of `|a[g][h]|` over defined off-diagonal cells.
    pub fn median_off_diagonal_abs(&self) -> Option<f64> {
        let mut v: Vec<f64> = (0..GUESSES)
            .flat_map(|g| ((g + 1)..GUESSES).map(move |h| (g, h)))
            .filter_map(|(g, h)| self.get(g, h))
            .map(f64::abs)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        Some(if v.len().is_multiple_of(2) {
            (v[mid - 1] + v[mid]) / 2.0
        } else {
            v[mid]
        })
    }
}

/// Aliasing map of the weight at `prior.len()` given the true weights above it.
pub fn model_aliasing(
    prior: &[i8],
    inputs: &[InputBatch],
    model: LeakageModel,
    psum_width: u32,
) -> Result<AliasingMap> {
    if inputs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: inputs.len(),
        });
    }
    let hyp = hypothesis_matrix(model, prior, inputs, psum_width)?;
    let rows: Vec<Centered> = (0..GUESSES).map(|g| Centered::new(hyp.row(g))).collect();
    let mut cells = vec![None; GUESSES * GUESSES];
    for g in 0..GUESSES {
        if rows[g].sum_sq > 0.0 {
            cells[g * GUESSES + g] = Some(1.0);
        }
        for h in (g + 1)..GUESSES {
            let r = rows[g].corr(&rows[h]);
            cells[g * GUESSES + h] = r;
            cells[h * GUESSES + g] = r;
        }
    }
    Ok(AliasingMap { cells })
}

/// 1-based PE number in row-major order: PE1..PE(C) form the top row, so the
/// rightmost column of a 3x3 array is PE3, PE6, PE9.
pub fn pe_number(r: usize, c: usize, cols: usize) -> usize {
    r * cols + c + 1
}

/// Inverse of [`pe_number`].
pub fn pe_position(number: usize, cols: usize) -> (usize, usize) {
    ((number - 1) / cols, (number - 1) % cols)
}

/// Correlation of Reg C switching between PE pairs, indexed by `pe_number - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeCorrelationTable {
    num_pes: usize,
    values: Vec<f64>,
    defined: Vec<bool>,
}

impl PeCorrelationTable {
    pub fn num_pes(&self) -> usize {
        self.num_pes
    }

    /// Entry for 0-based PE indices; `None` when the pair shares no active cycle
    /// with non-constant switching.
    pub fn get(&self, p: usize, q: usize) -> Option<f64> {
        let i = p * self.num_pes + q;
        self.defined[i].then_some(self.values[i])
    }

    /// Entry for 0-based PE indices, undefined pairs reading 0.
    pub fn value(&self, p: usize, q: usize) -> f64 {
        self.values[p * self.num_pes + q]
    }

    /// Entry by 1-based PE numbers.
    pub fn by_number(&self, p: usize, q: usize) -> f64 {
        self.value(p - 1, q - 1)
    }
}

/// Which cycles feed the PE-pair correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeCorrelationMode {
    /// The single cycle with the most active PEs (earliest on ties). PEs idle
    /// there get undefined entries.
    #[default]
    BusiestCycle,
    /// Every cycle where both PEs are active; the coefficient of largest
    /// magnitude wins.
    StrongestSharedCycle,
}

/// Cycle with the most PEs performing a MAC, earliest on ties.
pub fn busiest_cycle(cfg: &ArrayConfig) -> usize {
    let active = |t: usize| {
        (0..cfg.rows())
            .flat_map(|r| (0..cfg.cols()).map(move |c| (r, c)))
            .filter(|&(r, c)| cfg.vector_at(r, c, t).is_some())
            .count()
    };
    let mut best = 0;
    for t in 1..cfg.total_cycles() {
        if active(t) > active(best) {
            best = t;
        }
    }
    best
}

/// Correlation of HD(Reg C) between every PE pair across batches, using
/// [`PeCorrelationMode::BusiestCycle`].
pub fn pe_hd_correlation(
    cfg: &ArrayConfig,
    weights: &WeightMatrix,
    inputs: &[InputBatch],
) -> Result<PeCorrelationTable> {
    pe_hd_correlation_with(cfg, weights, inputs, PeCorrelationMode::default())
}

pub fn pe_hd_correlation_with(
    cfg: &ArrayConfig,
    weights: &WeightMatrix,
    inputs: &[InputBatch],
    mode: PeCorrelationMode,
) -> Result<PeCorrelationTable> {
    if inputs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: inputs.len(),
        });
    }
    let pes = cfg.num_pes();
    let cycles: Vec<usize> = match mode {
        PeCorrelationMode::BusiestCycle => vec![busiest_cycle(cfg)],
        PeCorrelationMode::StrongestSharedCycle => (0..cfg.total_cycles()).collect(),
    };
    let mask = cfg.psum_mask();
    // series[p][k][n]: HD of Reg C of PE p during cycle cycles[k] of batch n.
    let mut series = vec![vec![Vec::with_capacity(inputs.len()); cycles.len()]; pes];
    for x in inputs {
        let tl = simulate_batch(cfg, weights, x)?;
        for r in 0..cfg.rows() {
            for c in 0..cfg.cols() {
                let p = pe_number(r, c, cfg.cols()) - 1;
                for (s, &t) in series[p].iter_mut().zip(&cycles) {
                    if tl.active(r, c, t) {
                        s.push(f64::from(hamming_distance(
                            tl.reg_c_before(r, c, t),
                            tl.reg_c(r, c, t),
                            mask,
                        )));
                    }
                }
            }
        }
    }
    let centered: Vec<Vec<Option<Centered>>> = series
        .iter()
        .map(|per_pe| {
            per_pe
                .iter()
                .map(|s| (!s.is_empty()).then(|| Centered::new(s)))
                .collect()
        })
        .collect();

    let mut values = vec![0.0; pes * pes];
    let mut defined = vec![false; pes * pes];
    for p in 0..pes {
        for q in p..pes {
            let best = (0..cycles.len())
                .filter_map(|k| match (&centered[p][k], &centered[q][k]) {
                    (Some(a), Some(b)) => a.corr(b),
                    _ => None,
                })
                .max_by(|a, b| a.abs().total_cmp(&b.abs()));
            if let Some(v) = best {
                let v = if p == q { 1.0 } else { v };
                for i in [p * pes + q, q * pes + p] {
                    values[i] = v;
                    defined[i] = true;
                }
            }
        }
    }
    Ok(PeCorrelationTable {
        num_pes: pes,
        values,
        defined,
    })
}
