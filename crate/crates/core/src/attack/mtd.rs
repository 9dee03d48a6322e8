use super::chain::GuessChain;
use crate::error::{Error, Result};
use crate::traces::TraceMatrix;

/// Outcome of a measurements-to-disclosure sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MtdReport {
    pub step: usize,
    /// Smallest prefix size at which the correct guess ranks first.
    pub mtd: Option<usize>,
    /// `(prefix size, rank of the correct guess)` for every evaluated prefix.
    pub points: Vec<(usize, Option<usize>)>,
}

impl MtdReport {
    pub fn display_mtd(&self) -> String {
        self.mtd.map_or_else(|| "NA".to_string(), |m| m.to_string())
    }
}

/// Runs `attack` on prefixes of `step`, `2 * step`, ... traces and stops at the
/// first prefix where `truth` ranks first. Attack errors count as a miss.
pub fn mtd_sweep<F>(
    traces: &TraceMatrix,
    step: usize,
    truth: &[i8],
    mut attack: F,
) -> Result<MtdReport>
where
    F: FnMut(&TraceMatrix) -> Result<GuessChain>,
{
    if step == 0 {
        return Err(Error::Precondition("MTD step must be positive".into()));
    }
    if traces.traces() < step {
        return Err(Error::InsufficientData {
            needed: step,
            got: traces.traces(),
        });
    }
    let mut points = Vec::new();
    let mut size = step;
    while size <= traces.traces() {
        let rank = attack(&traces.prefix(size)?)
            .ok()
            .and_then(|chain| chain.rank_of(truth));
        points.push((size, rank));
        if rank == Some(1) {
            return Ok(MtdReport {
                step,
                mtd: Some(size),
                points,
            });
        }
        size += step;
    }
    Ok(MtdReport {
        step,
        mtd: None,
        points,
    })
}
