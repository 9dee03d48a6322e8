//! Correlation power analysis against weight-stationary arrays.

mod chain;
mod mtd;
mod pearson;
mod template;

pub use chain::{
    chained_column_attack, conventional_2d_attack, AttackConfig, ChainEntry, GuessChain, ScoreMode,
    Window,
};
pub use mtd::{mtd_sweep, MtdReport};
pub use pearson::{pearson_corr, CorrelationMatrix};
pub use template::{
    make_template_traces, multiphase_attack, multiphase_attack_in_order, subtract_template,
    template_2d_attack, MultiphaseOutcome, PhaseOutcome, Profiler, SimulatedProfiler,
};

pub(crate) use pearson::Centered;
