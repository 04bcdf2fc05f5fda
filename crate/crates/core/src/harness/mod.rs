//! Experiment orchestration: theorem checks, MSDR sweeps, NC trajectories and CLP runs.

mod mlp;
mod sweep;
mod theorem;
mod trajectory;

pub use mlp::{MlpRun, MlpSetup, TestSplit};
pub use sweep::{
    msdr_sweep, run_point, similarity_sweep, SweepAxis, SweepDefaults, SweepKind, SweepResult, SweepRow, SweepSpec,
};
pub use theorem::{
    check_conditions, run_seed, triple_ratios, verify_theorem1, ConditionCheck, ConditionReport, RatioReport,
    RatioSummary, SeedRatios, TheoremParams, MAX_TRIPLES,
};
pub use trajectory::{clp_experiment, nc_trajectory};
