//! Experiment plans, replica orchestration and result files.

mod check;
mod emit;
mod plan;
mod run;

pub use check::{random_monotone, random_vector, run_builtin_checks, CheckOutcome};
pub use emit::{emit, emit_violation};
pub use plan::{
    parse_plan, CheckSpec, DebugSpec, ExperimentPlan, HProbeSpec, OutputFormat, OutputSpec,
    PlanError, ProbeSpec, SweepPoint, OUT_DIR_ENV,
};
pub use run::{
    run_plan, BundleMetadata, HarnessError, MonitorSummary, PairQvSummary, PointResult,
    ProbeVerdict, ResultBundle,
};
