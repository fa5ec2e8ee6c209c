//! Acceptance criteria AC-1 to AC-8. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use metafn::harness::{
    bench_steps, check_gradients, evaluate_values, scenario, train_on, EvalSummary, InnerAlgo, MetricKind, OuterAlgo,
    RunConfig,
};
use metafn::inner_kernel::{adapt, KernelParams};
use metafn::ndcore::Vector;
use metafn::outer::{aggregate_oamfs, aggregate_plain, GradientBundle};
use metafn::tasks::{scenario_pair, BlobParams, EpisodeShape, TaskDistribution, TaskSampler, Targets};
use metafn::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

fn fmt(s: &EvalSummary) -> String {
    format!("{:.4} ± {:.4}", s.mean_metric, s.ci95_halfwidth)
}

/// Gradient descent on the ridge objective in coefficient space, run to a fixed point.
fn gd_oracle(xs: &[f64], ys: &[f64], sigma: f64, lambda: f64, queries: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let k = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * sigma * sigma)).exp();
    let gram: Vec<Vec<f64>> = xs.iter().map(|&a| xs.iter().map(|&b| k(a, b)).collect()).collect();
    let mut beta = vec![0.0; n];
    let lr = 1e-3;
    for _ in 0..2_000_000 {
        let step: Vec<f64> = (0..n)
            .map(|i| {
                let fi: f64 = (0..n).map(|j| gram[i][j] * beta[j]).sum();
                2.0 * lr * ((fi - ys[i]) + lambda * beta[i])
            })
            .collect();
        let mut largest = 0.0f64;
        for (b, s) in beta.iter_mut().zip(&step) {
            *b -= s;
            largest = largest.max(s.abs());
        }
        if largest < 1e-16 {
            break;
        }
    }
    queries.iter().map(|&q| xs.iter().zip(&beta).map(|(&x, b)| b * k(x, q)).sum()).collect()
}

fn ac1() -> Result<Verdict> {
    let sampler = TaskDistribution::default().prepare()?;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for e in 0..20 {
        let k_shot = 5 + e % 16;
        let ep = sampler.sample_episode(EpisodeShape { n_way: 1, k_shot, q_query: 25 }, &mut rng)?;
        let kp = KernelParams::new(rng.random_range(0.5..2.0), rng.random_range(0.05..1.0), None)?;
        let a = adapt(&ep, &kp)?;
        let Targets::Real(ys) = &ep.support_y else { unreachable!() };
        for x in [&ep.support_x, &ep.query_x] {
            let pred = a.predict(x)?;
            let oracle = gd_oracle(ep.support_x.data(), ys, kp.sigma(), kp.lambda(), x.data());
            for (p, o) in pred.data().iter().zip(&oracle) {
                worst = worst.max((p - o).abs());
            }
        }
    }
    verdict(worst < 1e-5, format!("sup |closed form - GD oracle| = {worst:.2e} over 20 episodes (tol 1e-5)"))
}

fn ac2() -> Result<Verdict> {
    let checks = check_gradients(&RunConfig::default())?;
    let parts: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {:.1e}/{:e}{}", c.path, c.report.max_rel_error, c.report.tol, if c.report.passed { "" } else { " FAIL" }))
        .collect();
    verdict(checks.iter().all(|c| c.report.passed), parts.join(", "))
}

fn bundle_of(gs: Vec<Vec<f64>>) -> GradientBundle {
    GradientBundle::from_grads(gs.into_iter().map(|g| Vector::new(g).unwrap()).collect()).unwrap()
}

fn ac3() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut failures = Vec::new();
    for _ in 0..2000 {
        let m = rng.random_range(1..=8);
        let d = rng.random_range(1..=12);
        let gs: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let (_, rep) = aggregate_oamfs(&bundle_of(gs))?;
        let (lo, hi) = (1.0 / m as f64, (2.0 * m as f64 - 1.0) / m as f64);
        if rep.scales.iter().any(|&s| s < lo - 1e-12 || s > hi + 1e-12) {
            failures.push("scale bounds");
            break;
        }
    }
    for _ in 0..200 {
        let d = rng.random_range(1..=12);
        let g: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, rep) = aggregate_oamfs(&bundle_of(vec![g.clone(), g.clone()]))?;
        if rep.scales.iter().any(|s| (s - 1.5).abs() > 1e-12) {
            failures.push("identical pair");
        }
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let (out, _) = aggregate_oamfs(&bundle_of(vec![g.clone(), neg]))?;
        if out.norm_inf() > 1e-12 {
            failures.push("antiparallel pair");
        }
        // Disjoint supports are orthogonal.
        let m = rng.random_range(1..=d);
        let ortho: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..d).map(|k| if k % m == i { rng.random_range(-3.0..3.0) } else { 0.0 }).collect())
            .collect();
        let b = bundle_of(ortho);
        let (out, _) = aggregate_oamfs(&b)?;
        let plain = aggregate_plain(&b);
        if out.iter().zip(plain.iter()).any(|(a, p)| (a - p).abs() > 1e-12) {
            failures.push("orthogonal bundle");
        }
    }
    failures.dedup();
    let detail = if failures.is_empty() {
        "bounds, identical, orthogonal and antiparallel properties hold on 2400 bundles".to_string()
    } else {
        format!("violated: {}", failures.join(", "))
    };
    verdict(failures.is_empty(), detail)
}

fn ac4() -> Result<Verdict> {
    let cfg = RunConfig::default();
    let runs = bench_steps(&cfg)?;
    let (maml, kernel) = runs.split_at(runs.len() - 1);
    let kernel = &kernel[0];
    let mse: Vec<f64> = maml.iter().map(|r| r.summary.mean_metric).collect();
    let monotone = maml.windows(2).all(|w| w[1].summary.mean_metric <= w[0].summary.mean_metric + w[0].summary.ci95_halfwidth);
    let improves = mse[mse.len() - 1] < mse[0];
    let one_solve = kernel.solves_per_task == 1.0;
    let beats = kernel.summary.mean_metric <= mse[0];
    let curve: Vec<String> = maml.iter().map(|r| format!("{}:{}", r.n_steps, fmt(&r.summary))).collect();
    verdict(
        monotone && improves && one_solve && beats,
        format!(
            "i_amfs MSE {} ({} solve/task) vs MAML steps {}",
            fmt(&kernel.summary),
            kernel.solves_per_task,
            curve.join(" ")
        ),
    )
}

/// The AC-5 task family: 5-way 1-shot blobs with overlapping classes.
fn blob_config(inner: InnerAlgo, outer: OuterAlgo, first_order: bool) -> RunConfig {
    let mut cfg = RunConfig {
        task: TaskDistribution::GaussianBlobs(BlobParams { within_std: 0.75, ..BlobParams::default() }),
        n_way: 5,
        k_shot: 1,
        inner,
        outer,
        ..RunConfig::default()
    };
    cfg.kernel.first_order = first_order;
    cfg
}

fn trained_accuracy(cfg: &RunConfig) -> Result<Vec<f64>> {
    let sampler = cfg.task.prepare()?;
    let trained = train_on(cfg, &sampler)?;
    evaluate_values(&trained.params, cfg, &sampler, 0)
}

struct BlobRuns {
    amfs: EvalSummary,
    maml: EvalSummary,
    fo_maml: EvalSummary,
    fo_amfs: EvalSummary,
}

fn blob_runs() -> Result<BlobRuns> {
    let s = |inner, outer, fo| -> Result<EvalSummary> {
        Ok(EvalSummary::from_values(&trained_accuracy(&blob_config(inner, outer, fo))?, MetricKind::Accuracy))
    };
    Ok(BlobRuns {
        amfs: s(InnerAlgo::IAmfs, OuterAlgo::OAmfs, false)?,
        maml: s(InnerAlgo::Maml, OuterAlgo::Plain, false)?,
        fo_maml: s(InnerAlgo::FoMaml, OuterAlgo::Plain, false)?,
        fo_amfs: s(InnerAlgo::IAmfs, OuterAlgo::OAmfs, true)?,
    })
}

fn ac5(r: &BlobRuns) -> Result<Verdict> {
    verdict(
        r.amfs.mean_metric >= r.maml.mean_metric - 0.02,
        format!("AMFS {} vs MAML {} accuracy over {} episodes", fmt(&r.amfs), fmt(&r.maml), r.amfs.n_episodes),
    )
}

fn ac6() -> Result<Verdict> {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let mut cfg = blob_config(InnerAlgo::IAmfs, OuterAlgo::OAmfs, false);
        cfg.seed = seed;
        let TaskDistribution::GaussianBlobs(p) = &cfg.task else { unreachable!() };
        let same = TaskSampler::GaussianBlobs(p.clone());
        let out = scenario(&cfg, &scenario_pair(same.clone(), same)?)?;
        let gap = (out.in_dist.mean_metric - out.out_of_dist.mean_metric).abs();
        let bound = out.in_dist.ci95_halfwidth + out.out_of_dist.ci95_halfwidth;
        ok &= gap < bound;
        parts.push(format!("seed {seed}: |{:.4} - {:.4}| = {gap:.4} < {bound:.4}", out.in_dist.mean_metric, out.out_of_dist.mean_metric));
    }
    let cfg = RunConfig { k_shot: 1, ..RunConfig::default() };
    let study = metafn::harness::scenario_study(&cfg)?;
    ok &= study.len() == 2;
    for o in &study {
        parts.push(format!("{} in {} out {}", o.direction.label(), fmt(&o.in_dist), fmt(&o.out_of_dist)));
    }
    verdict(ok, parts.join("; "))
}

fn run_cli(args: &[&str], out: &Path) -> std::io::Result<i32> {
    let status = Command::new(env!("CARGO_BIN_EXE_metafn")).args(args).arg("--out").arg(out).output()?.status;
    Ok(status.code().unwrap_or(-1))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn ac7() -> Result<Verdict> {
    let tmp = tempfile::tempdir().map_err(|e| metafn::Error::io("tempdir", e))?;
    let cfg_path = tmp.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        "n_meta_iters = 20\neval_episodes = 50\nlog_interval = 5\nthreads = 2\n[net]\nhidden = [16]\n",
    )
    .map_err(|e| metafn::Error::io(&cfg_path, e))?;
    let cfg = cfg_path.to_str().unwrap();
    let mut bad = Vec::new();
    for cmd in ["train", "eval", "scenario", "check-grad", "bench-steps"] {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        let args = [cmd, "--config", cfg, "--seed", "7", "--dump-weights"];
        let codes = (run_cli(&args, &a), run_cli(&args, &b));
        let same = matches!(codes, (Ok(0), Ok(0))) && dir_bytes(&a) == dir_bytes(&b) && !dir_bytes(&a).is_empty();
        if !same {
            bad.push(format!("{cmd} {codes:?}"));
        }
    }
    let detail = if bad.is_empty() {
        "train, eval, scenario, check-grad, bench-steps: byte-identical artifacts across two runs".to_string()
    } else {
        format!("differing: {}", bad.join(", "))
    };
    verdict(bad.is_empty(), detail)
}

fn ac8(r: &BlobRuns) -> Result<Verdict> {
    let maml_drop = r.maml.mean_metric - r.fo_maml.mean_metric;
    let amfs_drop = r.amfs.mean_metric - r.fo_amfs.mean_metric;
    verdict(
        maml_drop >= amfs_drop,
        format!(
            "maml -> fo_maml drop {maml_drop:+.4} ({} -> {}); amfs -> fo-amfs drop {amfs_drop:+.4} ({} -> {})",
            fmt(&r.maml),
            fmt(&r.fo_maml),
            fmt(&r.amfs),
            fmt(&r.fo_amfs)
        ),
    )
}

fn main() {
    let mut all = true;
    let mut report = |name: &str, start: Instant, v: Result<Verdict>| {
        let secs = start.elapsed().as_secs_f64();
        match v {
            Ok(v) => {
                all &= v.passed;
                println!("{name} {} ({secs:.1}s): {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
            }
            Err(e) => {
                all = false;
                println!("{name} FAIL ({secs:.1}s): error {e}");
            }
        }
    };
    let t = Instant::now();
    report("AC-1", t, ac1());
    let t = Instant::now();
    report("AC-2", t, ac2());
    let t = Instant::now();
    report("AC-3", t, ac3());
    let t = Instant::now();
    report("AC-4", t, ac4());
    let t = Instant::now();
    let runs = blob_runs();
    match &runs {
        Ok(r) => report("AC-5", t, ac5(r)),
        Err(e) => report("AC-5", t, Err(metafn::Error::Config(e.to_string()))),
    }
    let t = Instant::now();
    report("AC-6", t, ac6());
    let t = Instant::now();
    report("AC-7", t, ac7());
    let t = Instant::now();
    match &runs {
        Ok(r) => report("AC-8", t, ac8(r)),
        Err(e) => report("AC-8", t, Err(metafn::Error::Config(e.to_string()))),
    }
    if !all {
        std::process::exit(1);
    }
}
