use crate::error::Result;
use crate::tasks::{scenario_pair, ScenarioDirection, ScenarioSpec, TaskSampler};

use super::config::{InnerAlgo, OuterAlgo, RunConfig};
use super::run::{evaluate_on, evaluate_values, train_on, EvalSummary, MetricKind, MetricsRecord};

/// In- and out-of-distribution results of one scenario direction.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub direction: ScenarioDirection,
    pub in_dist: EvalSummary,
    pub out_of_dist: EvalSummary,
    pub curve: Vec<MetricsRecord>,
}

/// Evaluation block for out-of-distribution episodes, distinct from the
/// in-distribution block even when both distributions coincide.
const OUT_OF_DIST_BLOCK: u32 = 1;

/// Train on `spec.train`, then evaluate on fresh episodes from both sides.
pub fn scenario(cfg: &RunConfig, spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    let trained = train_on(cfg, &spec.train)?;
    Ok(ScenarioOutcome {
        direction: spec.direction,
        in_dist: evaluate_on(&trained.params, cfg, &spec.train, 0)?,
        out_of_dist: evaluate_on(&trained.params, cfg, &spec.test, OUT_OF_DIST_BLOCK)?,
        curve: trained.records,
    })
}

/// Both directions over `cfg.scenario`: G->S, then S->G.
pub fn scenario_study(cfg: &RunConfig) -> Result<Vec<ScenarioOutcome>> {
    cfg.validate()?;
    let spec = scenario_pair(cfg.scenario.general.prepare()?, cfg.scenario.specific.prepare()?)?;
    Ok(vec![scenario(cfg, &spec)?, scenario(cfg, &spec.reversed())?])
}

/// Largest inner-step count in the sweep.
pub const BENCH_MAX_STEPS: usize = 5;

/// One configuration of the inner-step sweep.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub label: String,
    pub inner: InnerAlgo,
    pub outer: OuterAlgo,
    pub n_steps: usize,
    pub summary: EvalSummary,
    /// Per-episode metrics; every run uses the same evaluation episodes.
    pub values: Vec<f64>,
    pub curve: Vec<MetricsRecord>,
    /// Work per task per meta-iteration.
    pub solves_per_task: f64,
    pub steps_per_task: f64,
}

fn bench_run(cfg: RunConfig, sampler: &TaskSampler, label: String) -> Result<BenchRun> {
    let trained = train_on(&cfg, sampler)?;
    let values = evaluate_values(&trained.params, &cfg, sampler, 0)?;
    let tasks = (cfg.n_meta_iters * cfg.meta_batch_size).max(1) as f64;
    Ok(BenchRun {
        label,
        inner: cfg.inner,
        outer: cfg.outer,
        n_steps: cfg.maml.n_steps,
        summary: EvalSummary::from_values(&values, MetricKind::for_sampler(sampler)),
        values,
        curve: trained.records,
        solves_per_task: trained.total_solves as f64 / tasks,
        steps_per_task: trained.total_inner_steps as f64 / tasks,
    })
}

/// Step-based meta-learning with 1 to [`BENCH_MAX_STEPS`] inner steps
/// (plain aggregation), against the closed-form inner loop with the
/// configured aggregator. The step-based runs use `fo_maml` when that is the
/// configured inner loop and second-order MAML otherwise.
pub fn bench_steps(cfg: &RunConfig) -> Result<Vec<BenchRun>> {
    cfg.validate()?;
    let sampler = cfg.task.prepare()?;
    let step_algo = if cfg.inner == InnerAlgo::FoMaml { InnerAlgo::FoMaml } else { InnerAlgo::Maml };
    let mut runs = Vec::new();
    for n_steps in 1..=BENCH_MAX_STEPS {
        let mut c = cfg.clone();
        c.inner = step_algo;
        c.outer = OuterAlgo::Plain;
        c.maml.n_steps = n_steps;
        log::info!("bench: {} with {n_steps} inner steps", step_algo.label());
        runs.push(bench_run(c, &sampler, format!("{}-{n_steps}", step_algo.label()))?);
    }
    let mut c = cfg.clone();
    c.inner = InnerAlgo::IAmfs;
    log::info!("bench: i_amfs");
    runs.push(bench_run(c, &sampler, format!("i_amfs+{}", cfg.outer.label()))?);
    Ok(runs)
}
