use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::outer::MetaParams;

use super::output::{self, SummaryRow};
use super::{
    bench_steps, check_gradients, evaluate_on, exit_code, initial_params, scenario_study, train_on, RunConfig,
};

#[derive(Debug, Parser)]
#[command(name = "metafn", version, about = "Few-shot meta-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; every field is optional.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory for CSV artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Write per-iteration O-AMFS weights to weights.csv (train only).
    #[arg(long, global = true)]
    dump_weights: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Meta-train, then evaluate on fresh episodes.
    Train,
    /// Evaluate saved (or freshly initialized) meta-parameters.
    Eval,
    /// Train on each side of a general/specific pair and evaluate on both.
    Scenario,
    /// Finite-difference check of every meta-gradient path on small models.
    CheckGrad,
    /// Sweep MAML over 1 to 5 inner steps against one closed-form solve.
    BenchSteps,
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.dump_weights |= common.dump_weights;
    cfg.validate()?;
    Ok(cfg)
}

fn summary_line(label: &str, s: &super::EvalSummary) -> String {
    format!("{label}: {} {:.4} ± {:.4} over {} episodes", s.metric.label(), s.mean_metric, s.ci95_halfwidth, s.n_episodes)
}

fn row(run: &str, cfg: &RunConfig, split: &str, summary: super::EvalSummary) -> SummaryRow {
    SummaryRow {
        run: run.into(),
        inner: cfg.inner.label().into(),
        outer: cfg.outer.label().into(),
        split: split.into(),
        summary,
    }
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let sampler = cfg.task.prepare()?;
    let trained = train_on(cfg, &sampler)?;
    let summary = evaluate_on(&trained.params, cfg, &sampler, 0)?;
    let dir = &cfg.out;
    output::write(dir, "metrics.csv", &output::metrics_csv("train", &trained.records))?;
    output::write(dir, "params.csv", &output::params_csv(&trained.params.flatten()))?;
    output::write(dir, "summary.csv", &output::summary_csv(&[row("train", cfg, "eval", summary)]))?;
    if cfg.dump_weights {
        output::write(dir, "weights.csv", &output::weights_csv(&trained.weights))?;
    }
    if cfg.audit_episodes {
        let mut s = String::from("index,hash\n");
        for (i, h) in trained.episode_hashes.iter().enumerate() {
            let _ = writeln!(s, "{i},{h:016x}");
        }
        output::write(dir, "episodes.csv", &s)?;
    }
    println!("{}", summary_line("eval", &summary));
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let sampler = cfg.task.prepare()?;
    let init = initial_params(cfg, &sampler)?;
    let theta: MetaParams = match &cfg.params {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            init.unflatten(&output::parse_params_csv(&text)?)
                .map_err(|e| Error::Config(format!("{} does not fit the configured model: {e}", p.display())))?
        }
        None => init,
    };
    let summary = evaluate_on(&theta, cfg, &sampler, 0)?;
    output::write(&cfg.out, "summary.csv", &output::summary_csv(&[row("eval", cfg, "eval", summary)]))?;
    println!("{}", summary_line("eval", &summary));
    Ok(())
}

fn cmd_scenario(cfg: &RunConfig) -> Result<()> {
    let outcomes = scenario_study(cfg)?;
    let mut rows = Vec::new();
    let mut metrics = format!("{}\n", output::METRICS_HEADER);
    for o in &outcomes {
        let label = o.direction.label();
        rows.push(row(label, cfg, "in_dist", o.in_dist));
        rows.push(row(label, cfg, "out_of_dist", o.out_of_dist));
        output::append_metrics(&mut metrics, &format!("train:{label}"), &o.curve);
        println!("{}", summary_line(&format!("{label} in-dist"), &o.in_dist));
        println!("{}", summary_line(&format!("{label} out-of-dist"), &o.out_of_dist));
    }
    output::write(&cfg.out, "summary.csv", &output::summary_csv(&rows))?;
    output::write(&cfg.out, "metrics.csv", &metrics)
}

fn cmd_check(cfg: &RunConfig) -> Result<bool> {
    let checks = check_gradients(cfg)?;
    output::write(&cfg.out, "checks.csv", &output::checks_csv(&checks))?;
    for c in &checks {
        let r = &c.report;
        println!(
            "{} {}: max relative error {:.3e} (tol {:e}, {} params)",
            if r.passed { "PASS" } else { "FAIL" },
            c.path,
            r.max_rel_error,
            r.tol,
            r.n_params
        );
    }
    Ok(checks.iter().all(|c| c.report.passed))
}

fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let runs = bench_steps(cfg)?;
    let mut rows = Vec::new();
    let mut metrics = format!("{}\n", output::METRICS_HEADER);
    for r in &runs {
        rows.push(SummaryRow {
            run: r.label.clone(),
            inner: r.inner.label().into(),
            outer: r.outer.label().into(),
            split: "eval".into(),
            summary: r.summary,
        });
        output::append_metrics(&mut metrics, &r.label, &r.curve);
        println!("{}", summary_line(&r.label, &r.summary));
    }
    output::write(&cfg.out, "summary.csv", &output::summary_csv(&rows))?;
    output::write(&cfg.out, "metrics.csv", &metrics)
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("METAFN_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parse `args` (including the program name), run the command and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = resolve(&cli.common).and_then(|cfg| match cli.command {
        Command::Train => cmd_train(&cfg).map(|_| true),
        Command::Eval => cmd_eval(&cfg).map(|_| true),
        Command::Scenario => cmd_scenario(&cfg).map(|_| true),
        Command::CheckGrad => cmd_check(&cfg),
        Command::BenchSteps => cmd_bench(&cfg).map(|_| true),
    });
    match result {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            3
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
