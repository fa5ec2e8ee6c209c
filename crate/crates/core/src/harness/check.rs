use crate::error::{Error, Result};
use crate::gradnet::{central_differences, compare, Activation, CheckReport, NetParams};
use crate::inner_kernel::{task_objective_with, KernelParams, ObjectiveOptions, RegWeights};
use crate::inner_maml::{adapt_flat, meta_gradient_flat, BilevelLoss, EpisodeLoss, InnerConfig, Order};
use crate::tasks::rng::{stream, Purpose};
use crate::tasks::{BlobParams, Episode, EpisodeShape, SinusoidParams, TaskSampler};

use super::config::{RunConfig, CHECK_MAX_PARAMS};

/// Finite-difference verdict for one meta-gradient path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCheck {
    pub path: &'static str,
    pub report: CheckReport,
}

/// Penalty weights used by the kernel paths so every objective term is exercised.
const CHECK_REG: f64 = 0.1;

fn corrupt(mut g: Vec<f64>, on: bool) -> Vec<f64> {
    if on {
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
        for v in &mut g {
            *v = 1.01 * *v + 1e-2 * scale;
        }
    }
    g
}

fn tiny_net(widths: &[usize], rng: &mut impl rand::Rng) -> Result<NetParams> {
    NetParams::init(widths, Activation::Tanh, rng)
}

fn widths(input: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend(hidden);
    w.push(out);
    w
}

fn enforce_cap(path: &str, n: usize) -> Result<()> {
    if n > CHECK_MAX_PARAMS {
        return Err(Error::Config(format!("{path}: {n} parameters exceeds the {CHECK_MAX_PARAMS}-parameter check limit")));
    }
    Ok(())
}

fn check_kernel(path: &'static str, ep: &Episode, kp: &KernelParams, cfg: &RunConfig) -> Result<PathCheck> {
    enforce_cap(path, kp.num_params())?;
    let rw = RegWeights { mu: CHECK_REG, gamma: CHECK_REG, mu_sign: cfg.reg.mu_sign };
    let opts = ObjectiveOptions { info: cfg.kernel.info, first_order: false };
    let value = |flat: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, g) = task_objective_with(ep, &kp.unflatten(flat)?, &rw, opts)?;
        Ok((v.total, g.flatten()))
    };
    let point = kp.flatten();
    let analytic = corrupt(value(&point)?.1, cfg.check.inject_fault);
    let numeric = central_differences(|x| value(x).map(|v| v.0), &point, cfg.check.step)?;
    Ok(PathCheck { path, report: compare(&analytic, &numeric, cfg.check.kernel_tol) })
}

/// Check every meta-gradient path against central differences on small
/// models built from `cfg.check`:
///
/// - `i_amfs/sigma_lambda`: raw-input kernel on a sinusoid episode.
/// - `i_amfs/embed`: kernel on a tanh embedding, sinusoid episode.
/// - `i_amfs/embed_classification`: the same on a 3-way blob episode.
/// - `maml/second_order`: gradient through the inner steps.
/// - `fo_maml/first_order`: query gradient at the adapted parameters.
pub fn check_gradients(cfg: &RunConfig) -> Result<Vec<PathCheck>> {
    let c = &cfg.check;
    if c.support_points == 0 || c.query_points == 0 || !(c.step > 0.0) {
        return Err(Error::Config("check needs positive point counts and step".into()));
    }
    let mut rng = stream(cfg.seed, Purpose::Check, 0);
    let reg_shape = EpisodeShape { n_way: 1, k_shot: c.support_points, q_query: c.query_points };
    let sine = TaskSampler::Sinusoid(SinusoidParams::default()).sample_episode(reg_shape, &mut rng)?;
    let blobs = TaskSampler::GaussianBlobs(BlobParams { dim: 4, ..BlobParams::default() })
        .sample_episode(EpisodeShape { n_way: 3, k_shot: 2, q_query: 3 }, &mut rng)?;

    let mut out = Vec::new();
    out.push(check_kernel("i_amfs/sigma_lambda", &sine, &KernelParams::new(1.3, 0.2, None)?, cfg)?);
    let embed = tiny_net(&widths(1, &c.hidden, c.embed_dim), &mut rng)?;
    out.push(check_kernel("i_amfs/embed", &sine, &KernelParams::new(1.3, 0.2, Some(embed))?, cfg)?);
    let embed = tiny_net(&widths(4, &c.hidden, c.embed_dim), &mut rng)?;
    out.push(check_kernel("i_amfs/embed_classification", &blobs, &KernelParams::new(1.3, 0.2, Some(embed))?, cfg)?);

    let net = tiny_net(&widths(1, &c.hidden, 1), &mut rng)?;
    enforce_cap("maml", net.num_params())?;
    let loss = EpisodeLoss { template: &net, episode: &sine };
    let theta = net.flatten();
    let second = InnerConfig { inner_lr: cfg.maml.inner_lr, n_steps: cfg.maml.n_steps, order: Order::Second };
    let (adapted, trajectory, _) = adapt_flat(&loss, &theta, &second)?;
    let analytic = corrupt(meta_gradient_flat(&loss, &adapted, &trajectory, &second)?.1, c.inject_fault);
    let bilevel = |t: &[f64]| -> Result<f64> {
        let (a, _, _) = adapt_flat(&loss, t, &second)?;
        Ok(loss.query(&a)?.0)
    };
    let numeric = central_differences(bilevel, &theta, c.step)?;
    out.push(PathCheck { path: "maml/second_order", report: compare(&analytic, &numeric, c.maml_tol) });

    let first = InnerConfig { order: Order::First, ..second };
    let analytic = corrupt(meta_gradient_flat(&loss, &adapted, &trajectory, &first)?.1, c.inject_fault);
    let numeric = central_differences(|t| loss.query(t).map(|v| v.0), &adapted, c.step)?;
    out.push(PathCheck { path: "fo_maml/first_order", report: compare(&analytic, &numeric, c.maml_tol) });
    Ok(out)
}
