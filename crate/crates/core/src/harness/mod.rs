//! Training and evaluation loops, scenario studies, gradient checks and the
//! reproducible CSV artifacts behind the `metafn` command line.

mod check;
#[cfg(feature = "cli")]
pub mod cli;
mod config;
pub mod output;
mod run;
mod studies;
mod workers;

pub use check::{check_gradients, PathCheck};
pub use config::{
    ActivationChoice, CheckConfig, InnerAlgo, KernelConfig, KernelInput, MamlConfig, NetConfig, OuterAlgo, RunConfig,
    ScenarioConfig, CHECK_MAX_PARAMS,
};
pub use run::{
    episode_metric, eval_episode, evaluate, evaluate_on, evaluate_values, initial_params, train, train_episode, train_on,
    EvalSummary, MetricKind, MetricsRecord, TrainOutcome, WeightRow,
};
pub use studies::{bench_steps, scenario, scenario_study, BenchRun, ScenarioOutcome, BENCH_MAX_STEPS};

use crate::error::Error;

/// Process exit status for a failed command: 2 for configuration problems,
/// 3 for numerical failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        e if e.is_numerical() => 3,
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch(_)
        | Error::InsufficientData(_)
        | Error::Image { .. } => 2,
        _ => 1,
    }
}
