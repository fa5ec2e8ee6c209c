use std::time::Duration;

use crate::error::{Error, Result};
use crate::gradnet::loss::{accuracy, mse};
use crate::inner_kernel::{adapt, task_objective_with};
use crate::inner_maml::{adapt_maml, meta_gradient, net_metric, InnerConfig};
use crate::ndcore::{factorizations, Vector};
use crate::outer::{aggregate_oamfs, aggregate_plain, GradientBundle, MetaOptimizer, MetaParams};
use crate::tasks::rng::{stream, Purpose};
use crate::tasks::{Episode, TaskSampler, Targets};

use super::config::{OuterAlgo, RunConfig};
use super::workers::Workers;

/// What an evaluation measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Accuracy,
    Mse,
}

impl MetricKind {
    pub fn for_sampler(sampler: &TaskSampler) -> Self {
        if sampler.is_classification() {
            MetricKind::Accuracy
        } else {
            MetricKind::Mse
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Mse => "mse",
        }
    }
}

/// Mean and 95% half-width of a per-episode metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub mean_metric: f64,
    /// `1.96 · std / √n`, with the population standard deviation.
    pub ci95_halfwidth: f64,
    pub n_episodes: usize,
    pub metric: MetricKind,
}

impl EvalSummary {
    pub fn from_values(values: &[f64], metric: MetricKind) -> Self {
        let (mean, half) = mean_ci95(values);
        EvalSummary { mean_metric: mean, ci95_halfwidth: half, n_episodes: values.len(), metric }
    }
}

pub(crate) fn mean_ci95(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// One logged meta-iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub meta_iter: usize,
    /// Mean query loss over the meta-batch and its 95% half-width.
    pub train_loss: f64,
    pub train_loss_ci95: f64,
    /// Mean query MSE or accuracy over the meta-batch.
    pub train_metric: f64,
    pub eval: Option<EvalSummary>,
    /// Not written to CSV, which must be reproducible byte for byte.
    pub wall_time: Duration,
    /// Linear solves and inner gradient steps in this iteration.
    pub solves: u64,
    pub inner_steps: u64,
}

/// Pairwise O-AMFS weight of one meta-iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRow {
    pub iter: usize,
    pub i: usize,
    pub j: usize,
    pub w_ij: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MetaParams,
    pub records: Vec<MetricsRecord>,
    /// Filled when weight dumping is on and the aggregator is O-AMFS.
    pub weights: Vec<WeightRow>,
    /// Content hashes of every training episode, when auditing.
    pub episode_hashes: Vec<u64>,
    pub total_solves: u64,
    pub total_inner_steps: u64,
}

struct TaskOutcome {
    query_loss: f64,
    metric: f64,
    grad: Vector,
    solves: u64,
    steps: u64,
    task_id: u64,
    hash: u64,
}

/// The `i`-th training episode of meta-iteration `iter` (1-based).
pub fn train_episode(cfg: &RunConfig, sampler: &TaskSampler, iter: usize, i: usize) -> Result<Episode> {
    let index = (iter as u64 - 1) * cfg.meta_batch_size as u64 + i as u64;
    sampler.sample_episode(cfg.shape(), &mut stream(cfg.seed, Purpose::Train, index))
}

/// The `e`-th evaluation episode of block `block`. Blocks give independent
/// evaluation sets over the same seed.
pub fn eval_episode(cfg: &RunConfig, sampler: &TaskSampler, block: u32, e: usize) -> Result<Episode> {
    let index = ((block as u64) << 32) | e as u64;
    sampler.sample_episode(cfg.shape(), &mut stream(cfg.seed, Purpose::Eval, index))
}

/// Seeded initialization for the sampler's task family.
pub fn initial_params(cfg: &RunConfig, sampler: &TaskSampler) -> Result<MetaParams> {
    cfg.initial_params(sampler.input_dim(), sampler.is_classification(), &mut stream(cfg.seed, Purpose::Init, 0))
}

fn task_outcome(cfg: &RunConfig, inner: &InnerConfig, theta: &MetaParams, ep: &Episode) -> Result<TaskOutcome> {
    let hash = if cfg.audit_episodes { ep.content_hash() } else { 0 };
    match theta {
        MetaParams::Kernel(kp) => {
            let before = factorizations();
            let (value, grad) = task_objective_with(ep, kp, &cfg.reg, cfg.objective_options())?;
            Ok(TaskOutcome {
                query_loss: value.query_loss,
                metric: value.query_metric,
                grad: Vector::new(grad.flatten())?,
                solves: factorizations() - before,
                steps: 0,
                task_id: ep.task_id,
                hash,
            })
        }
        MetaParams::Net(net) => {
            let adapted = adapt_maml(ep, net, inner)?;
            let mg = meta_gradient(ep, net, &adapted, inner)?;
            Ok(TaskOutcome {
                query_loss: mg.query_loss,
                metric: mg.query_metric,
                grad: mg.grad,
                solves: 0,
                steps: adapted.steps() as u64,
                task_id: ep.task_id,
                hash,
            })
        }
    }
}

/// Wall clock for progress records; reads zero where the platform has no clock.
struct Clock(#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))] std::time::Instant);

impl Clock {
    fn start() -> Self {
        Clock(
            #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
            std::time::Instant::now(),
        )
    }

    fn elapsed(&self) -> Duration {
        #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
        return self.0.elapsed();
        #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
        Duration::ZERO
    }
}

fn at_iter(iter: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFiniteLoss { .. } => e,
        e if e.is_numerical() => Error::NonFiniteLoss { iter, detail: e.to_string() },
        e => e,
    }
}

/// Meta-train on the configured task distribution.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sampler = cfg.task.prepare()?;
    train_on(cfg, &sampler)
}

/// Meta-train on an already prepared sampler.
///
/// Each iteration samples `m` tasks, adapts and differentiates each one
/// (in parallel when configured), then aggregates and steps on one thread.
pub fn train_on(cfg: &RunConfig, sampler: &TaskSampler) -> Result<TrainOutcome> {
    let workers = Workers::new(cfg.threads)?;
    let inner = cfg.inner_config();
    let mut theta = initial_params(cfg, sampler)?;
    let mut opt = MetaOptimizer::new(cfg.meta_optimizer);
    let m = cfg.meta_batch_size;
    let clock = Clock::start();
    let mut out = TrainOutcome {
        params: theta.clone(),
        records: Vec::new(),
        weights: Vec::new(),
        episode_hashes: Vec::new(),
        total_solves: 0,
        total_inner_steps: 0,
    };

    for iter in 1..=cfg.n_meta_iters {
        let snapshot = &theta;
        let tasks = workers
            .map(m, |i| {
                let ep = train_episode(cfg, sampler, iter, i)?;
                task_outcome(cfg, &inner, snapshot, &ep)
            })
            .map_err(at_iter(iter))?;

        let losses: Vec<f64> = tasks.iter().map(|t| t.query_loss).collect();
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLoss { iter, detail: format!("query losses {losses:?}") });
        }
        let solves: u64 = tasks.iter().map(|t| t.solves).sum();
        let steps: u64 = tasks.iter().map(|t| t.steps).sum();
        let metric = tasks.iter().map(|t| t.metric).sum::<f64>() / m as f64;
        if cfg.audit_episodes {
            out.episode_hashes.extend(tasks.iter().map(|t| t.hash));
        }

        let ids = tasks.iter().map(|t| t.task_id).collect();
        let bundle = GradientBundle::new(tasks.into_iter().map(|t| t.grad).collect(), ids)?;
        let g = match cfg.outer {
            OuterAlgo::Plain => aggregate_plain(&bundle),
            OuterAlgo::OAmfs => {
                let (g, report) = aggregate_oamfs(&bundle)?;
                if cfg.dump_weights {
                    for i in 0..m {
                        for j in (0..m).filter(|&j| j != i) {
                            out.weights.push(WeightRow { iter, i, j, w_ij: report.weights[(i, j)] });
                        }
                    }
                }
                g
            }
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { iter, detail: "aggregated meta-gradient".into() });
        }
        theta = opt.step(&theta, &g, cfg.beta).map_err(at_iter(iter))?;
        out.total_solves += solves;
        out.total_inner_steps += steps;

        let eval = if cfg.eval_interval > 0 && iter % cfg.eval_interval == 0 {
            Some(evaluate_with(&theta, cfg, sampler, 0, &workers)?)
        } else {
            None
        };
        if iter % cfg.log_interval == 0 || iter == cfg.n_meta_iters || eval.is_some() {
            let (train_loss, train_loss_ci95) = mean_ci95(&losses);
            log::info!("iter {iter}: query loss {train_loss:.5} metric {metric:.5}");
            out.records.push(MetricsRecord {
                meta_iter: iter,
                train_loss,
                train_loss_ci95,
                train_metric: metric,
                eval,
                wall_time: clock.elapsed(),
                solves,
                inner_steps: steps,
            });
        }
    }
    out.params = theta;
    Ok(out)
}

/// Query metric of one episode after the configured inner adaptation.
pub fn episode_metric(theta: &MetaParams, inner: &InnerConfig, ep: &Episode) -> Result<f64> {
    match theta {
        MetaParams::Net(net) => net_metric(&adapt_maml(ep, net, inner)?.theta_prime, ep),
        MetaParams::Kernel(kp) => {
            let f = adapt(ep, kp)?.predict(&ep.query_x)?;
            match &ep.query_y {
                Targets::Real(y) => Ok(mse(&f, y)?.0),
                Targets::Labels(l) => Ok(accuracy(&f, l)),
            }
        }
    }
}

/// Per-episode metrics on `cfg.eval_episodes` fresh episodes from block `block`.
pub fn evaluate_values(theta: &MetaParams, cfg: &RunConfig, sampler: &TaskSampler, block: u32) -> Result<Vec<f64>> {
    eval_values_with(theta, cfg, sampler, block, &Workers::new(cfg.threads)?)
}

fn eval_values_with(theta: &MetaParams, cfg: &RunConfig, sampler: &TaskSampler, block: u32, workers: &Workers) -> Result<Vec<f64>> {
    let inner = cfg.inner_config();
    workers.map(cfg.eval_episodes, |e| {
        let ep = eval_episode(cfg, sampler, block, e)?;
        let v = episode_metric(theta, &inner, &ep)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("evaluation metric"))
        }
    })
}

fn evaluate_with(theta: &MetaParams, cfg: &RunConfig, sampler: &TaskSampler, block: u32, workers: &Workers) -> Result<EvalSummary> {
    let values = eval_values_with(theta, cfg, sampler, block, workers)?;
    Ok(EvalSummary::from_values(&values, MetricKind::for_sampler(sampler)))
}

/// Mean ± CI over fresh evaluation episodes of the configured distribution.
pub fn evaluate(theta: &MetaParams, cfg: &RunConfig) -> Result<EvalSummary> {
    let sampler = cfg.task.prepare()?;
    evaluate_on(theta, cfg, &sampler, 0)
}

pub fn evaluate_on(theta: &MetaParams, cfg: &RunConfig, sampler: &TaskSampler, block: u32) -> Result<EvalSummary> {
    evaluate_with(theta, cfg, sampler, block, &Workers::new(cfg.threads)?)
}
