//! The demo operations as plain Rust, so they can be tested off the browser.

use metafn::harness::{train_on, InnerAlgo, OuterAlgo, RunConfig};
use metafn::inner_kernel::{adapt, KernelParams};
use metafn::ndcore::{Matrix, Vector};
use metafn::outer::{aggregate_oamfs, aggregate_plain, GradientBundle, MetaParams};
use metafn::tasks::rng::{stream, Purpose};
use metafn::tasks::{EpisodeShape, Episode, TaskInfo, TaskSampler, Targets};
use metafn::{Error, Result};

/// A sampled sine task: its parameters and `k` support points.
#[derive(Debug, Clone, PartialEq)]
pub struct Sine {
    pub amplitude: f64,
    pub phase: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

pub fn sample_sine(seed: u64, k_shot: usize) -> Result<Sine> {
    let sampler = TaskSampler::Sinusoid(Default::default());
    let ep = sampler.sample_episode(EpisodeShape { n_way: 1, k_shot, q_query: 1 }, &mut stream(seed, Purpose::Eval, 0))?;
    let TaskInfo::Sinusoid { amplitude, phase } = ep.info else { unreachable!() };
    let Targets::Real(ys) = ep.support_y else { unreachable!() };
    Ok(Sine { amplitude, phase, xs: ep.support_x.into_data(), ys })
}

fn episode(xs: &[f64], ys: &[f64]) -> Result<Episode> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::LengthMismatch { expected: xs.len().max(1), got: ys.len() });
    }
    let n = xs.len();
    Ok(Episode {
        support_x: Matrix::new(n, 1, xs.to_vec())?,
        support_y: Targets::Real(ys.to_vec()),
        query_x: Matrix::new(n, 1, xs.to_vec())?,
        query_y: Targets::Real(ys.to_vec()),
        n_way: 1,
        k_shot: n,
        q_query: n,
        task_id: 0,
        classes: vec![0],
        info: TaskInfo::Sinusoid { amplitude: f64::NAN, phase: f64::NAN },
    })
}

/// Closed-form kernel fit of `(xs, ys)` evaluated at `grid`.
pub fn fit_curve(xs: &[f64], ys: &[f64], sigma: f64, lambda: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let kp = KernelParams::new(sigma, lambda, None)?;
    let a = adapt(&episode(xs, ys)?, &kp)?;
    Ok(a.predict(&Matrix::new(grid.len(), 1, grid.to_vec())?)?.into_data())
}

/// O-AMFS on `m` gradients packed row by row in `flat`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weighted {
    /// `m × m`, row-major.
    pub weights: Vec<f64>,
    pub scales: Vec<f64>,
    pub aggregated: Vec<f64>,
    pub plain: Vec<f64>,
}

pub fn weigh(flat: &[f64], m: usize) -> Result<Weighted> {
    if m == 0 || !flat.len().is_multiple_of(m) {
        return Err(Error::InvalidArgument(format!("{} values do not split into {m} gradients", flat.len())));
    }
    let d = flat.len() / m;
    let grads = flat.chunks(d.max(1)).map(|c| Vector::new(c.to_vec())).collect::<Result<Vec<_>>>()?;
    let bundle = GradientBundle::from_grads(grads)?;
    let (g, report) = aggregate_oamfs(&bundle)?;
    Ok(Weighted {
        weights: report.weights.into_data(),
        scales: report.scales,
        aggregated: g.into_vec(),
        plain: aggregate_plain(&bundle).into_vec(),
    })
}

/// Learned bandwidth and ridge weight after meta-training on sine tasks,
/// with the mean query loss at each logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub sigma: f64,
    pub lambda: f64,
    pub iters: Vec<f64>,
    pub losses: Vec<f64>,
}

pub fn train_kernel(seed: u64, k_shot: usize, n_meta_iters: usize, beta: f64) -> Result<Trained> {
    let cfg = RunConfig {
        seed,
        k_shot,
        n_meta_iters,
        beta,
        inner: InnerAlgo::IAmfs,
        outer: OuterAlgo::OAmfs,
        log_interval: (n_meta_iters / 50).max(1),
        ..RunConfig::default()
    };
    cfg.validate()?;
    let out = train_on(&cfg, &cfg.task.prepare()?)?;
    let MetaParams::Kernel(k) = out.params else { unreachable!() };
    Ok(Trained {
        sigma: k.sigma(),
        lambda: k.lambda(),
        iters: out.records.iter().map(|r| r.meta_iter as f64).collect(),
        losses: out.records.iter().map(|r| r.train_loss).collect(),
    })
}
