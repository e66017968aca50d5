//! The `coteach` pipeline: generate, pretrain, coteach, evaluate, sweep and
//! report.
//!
//! Run layout under `run_dir`:
//!
//! ```text
//! pretrained.ckpt            pre-trained peer (A, and B unless two-network)
//! pretrained_b.ckpt          pre-trained B in two-network mode
//! <strategy>/A_<iter>.ckpt   co-teaching checkpoints
//! <strategy>/history.csv
//! <strategy>/metrics.csv     written by evaluate
//! <strategy>/groups.csv      per-context metrics, usable as a baseline dump
//! <strategy>/curves.csv      written by report
//! sweep_<param>/<value>/     one co-teaching run per grid point
//! sweep_<param>.csv
//! ```
//!
//! Exit codes: 0 on success, 1 for usage and config errors, 2 for data
//! errors (missing or malformed artifacts, failed training).

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::corpus::{generate_synthetic_corpus, load_corpus, save_corpus, Corpus};
use crate::engine::{coteach_train, pretrain, select_model, RunHistory, TeachingStrategy};
use crate::eval::{ema, evaluate_test_set, paired_t_test, Evaluation, GroupMetrics, MetricsReport};
use crate::matcher::{load_checkpoint, save_checkpoint, ModelState};

pub use config::{ConfigError, PretrainSettings, RunConfig, SweepParam};

/// Marks an error as a usage problem (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "coteach", version, about = "Co-teaching for response matching on noisy data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run_dir` from the config.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Overrides `strategy` from the config.
    #[arg(long, global = true)]
    pub strategy: Option<TeachingStrategy>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic noisy corpus to `corpus_dir`.
    Generate,
    /// Pre-train the peer(s) on the full training set.
    Pretrain,
    /// Co-teach two peers starting from the pre-trained checkpoint(s).
    Coteach,
    /// Select the better peer on validation and score it on the test set.
    Evaluate {
        /// Per-context `groups.csv` of a baseline run for paired t-tests.
        #[arg(long)]
        baseline_dump: Option<PathBuf>,
        /// Evaluate `pretrained.ckpt` instead of a co-teaching run.
        #[arg(long)]
        pretrained: bool,
    },
    /// Co-teach and evaluate once per value of `sweep.param`.
    Sweep,
    /// Smooth `history.csv` into `curves.csv`.
    Report,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| UsageError(e.to_string()))?;
    execute(&cli)
}

/// Maps an error from [`run`] to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() || err.downcast_ref::<ConfigError>().is_some() {
        1
    } else {
        2
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.run_dir {
        cfg.run_dir = dir.clone();
    }
    if let Some(s) = cli.strategy {
        cfg = cfg.with_strategy(s);
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg),
        Command::Pretrain => cmd_pretrain(&cfg),
        Command::Coteach => cmd_coteach(&cfg).map(|_| ()),
        Command::Evaluate {
            baseline_dump,
            pretrained,
        } => {
            let out = cmd_evaluate(&cfg, *pretrained, baseline_dump.as_deref())?;
            print!("{out}");
            Ok(())
        }
        Command::Sweep => cmd_sweep(&cfg),
        Command::Report => cmd_report(&cfg),
    }
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let corpus = generate_synthetic_corpus(&cfg.gen)?;
    save_corpus(&corpus, &cfg.corpus_dir)?;
    println!(
        "wrote {}: {} train, {} valid, {} test contexts, realized noise {:.4}",
        cfg.corpus_dir.display(),
        corpus.train.len(),
        corpus.valid.len(),
        corpus.test.len(),
        corpus.realized_noise_fraction().unwrap_or(0.0)
    );
    Ok(())
}

fn read_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let corpus = load_corpus(&cfg.corpus_dir)
        .with_context(|| format!("loading corpus from {}", cfg.corpus_dir.display()))?;
    if corpus.vocab_size != cfg.spec_a.vocab_size {
        bail!(
            "corpus vocabulary {} differs from configured vocab_size {}",
            corpus.vocab_size,
            cfg.spec_a.vocab_size
        );
    }
    Ok(corpus.truncated(cfg.max_turns, cfg.max_tokens))
}

fn pretrained_path(cfg: &RunConfig, b: bool) -> PathBuf {
    cfg.run_dir.join(if b { "pretrained_b.ckpt" } else { "pretrained.ckpt" })
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<()> {
    let corpus = read_corpus(cfg)?;
    let tc = cfg.pretrain_config();
    let mut jobs = vec![(cfg.spec_a, false)];
    if let Some(b) = cfg.spec_b {
        jobs.push((b, true));
    }
    for (spec, is_b) in jobs {
        let out = pretrain(&spec, &corpus, &tc)?;
        let path = pretrained_path(cfg, is_b);
        save_checkpoint(&out.model, &path)?;
        println!(
            "pretrained {} -> {}: valid P@1 {:.4} (epoch {} of {})",
            spec.kind,
            path.display(),
            out.valid_p_at_1,
            out.best_epoch,
            tc.epochs
        );
    }
    Ok(())
}

fn load_pretrained(cfg: &RunConfig) -> Result<(ModelState, ModelState)> {
    let load = |p: PathBuf| load_checkpoint(&p).with_context(|| format!("loading {}", p.display()));
    let a = load(pretrained_path(cfg, false))?;
    let b = match cfg.spec_b {
        Some(_) => load(pretrained_path(cfg, true))?,
        None => a.clone(),
    };
    Ok((a, b))
}

fn strategy_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join(cfg.train.strategy.to_string())
}

pub fn cmd_coteach(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = strategy_dir(cfg);
    coteach_into(cfg, &dir)?;
    Ok(dir)
}

fn coteach_into(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let corpus = read_corpus(cfg)?;
    let (a, b) = load_pretrained(cfg)?;
    let tc = cfg.coteach_config();
    let out = coteach_train(&a, &b, &corpus, &tc, Some(dir))?;
    println!(
        "co-taught {} for {} iterations -> {}",
        tc.strategy,
        out.history.len(),
        dir.display()
    );
    Ok(())
}

/// Latest iteration with both `A_<iter>.ckpt` and `B_<iter>.ckpt` in `dir`.
fn latest_iteration(dir: &Path) -> Result<usize> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut best = None;
    for entry in entries {
        let name = entry?.file_name().to_string_lossy().into_owned();
        let Some(iter) = name
            .strip_prefix("A_")
            .and_then(|s| s.strip_suffix(".ckpt"))
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        if dir.join(format!("B_{iter}.ckpt")).exists() && best.map_or(true, |b| iter > b) {
            best = Some(iter);
        }
    }
    best.with_context(|| format!("no checkpoint pair in {}", dir.display()))
}

fn groups_csv(per_group: &[GroupMetrics]) -> String {
    let mut out = format!("context,{}\n", GroupMetrics::NAMES.join(","));
    for (i, g) in per_group.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in g.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Reads a `groups.csv` dump back into per-context metric rows.
pub fn read_groups_csv(path: &Path) -> Result<Vec<GroupMetrics>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = format!("context,{}", GroupMetrics::NAMES.join(","));
    if lines.next().map(str::trim) != Some(header.as_str()) {
        bail!("{}: expected header {header:?}", path.display());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let lineno = i + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            bail!("{}:{lineno}: expected 7 columns", path.display());
        }
        let mut v = [0.0; 6];
        for (slot, s) in v.iter_mut().zip(&cols[1..]) {
            *slot = s
                .parse()
                .with_context(|| format!("{}:{lineno}: invalid number {s:?}", path.display()))?;
        }
        rows.push(GroupMetrics::from_values(v));
    }
    Ok(rows)
}

/// Paired t-test per metric against `baseline`; one line per metric.
fn significance_lines(ev: &Evaluation, baseline: &[GroupMetrics]) -> Result<String> {
    if baseline.len() != ev.per_group.len() {
        bail!(
            "baseline dump has {} contexts, this run has {}",
            baseline.len(),
            ev.per_group.len()
        );
    }
    let mut out = String::from("metric,mean_diff,t,p\n");
    for (m, name) in GroupMetrics::NAMES.iter().enumerate() {
        let run: Vec<f64> = ev.per_group.iter().map(|g| g.values()[m]).collect();
        let base: Vec<f64> = baseline.iter().map(|g| g.values()[m]).collect();
        let t = paired_t_test(&run, &base)?;
        let diff = run.iter().zip(&base).map(|(a, b)| a - b).sum::<f64>() / run.len() as f64;
        let star = if *name == "P@1" && t.p < 0.05 && diff > 0.0 { "*" } else { "" };
        let _ = writeln!(out, "{name}{star},{diff:.6},{:.4},{:.6}", t.t, t.p);
    }
    Ok(out)
}

fn evaluate_dir(cfg: &RunConfig, corpus: &Corpus, dir: &Path, label: &str) -> Result<(Evaluation, String)> {
    let iter = latest_iteration(dir)?;
    let a = load_checkpoint(&dir.join(format!("A_{iter}.ckpt")))?;
    let b = load_checkpoint(&dir.join(format!("B_{iter}.ckpt")))?;
    let (peer, model, valid) = select_model(&a, &b, &corpus.valid)?;
    let ev = evaluate_test_set(model, &corpus.test)?;
    let row = ev.report.csv_row(&run_name(cfg), label);
    eprintln!(
        "{label}: selected peer {peer:?} at iteration {iter} (valid P@1 {valid:.4}), {} degenerate contexts removed",
        ev.removed
    );
    Ok((ev, row))
}

fn run_name(cfg: &RunConfig) -> String {
    cfg.run_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Evaluates a run and returns the text printed to stdout.
pub fn cmd_evaluate(cfg: &RunConfig, pretrained: bool, baseline_dump: Option<&Path>) -> Result<String> {
    let corpus = read_corpus(cfg)?;
    let (dir, ev, row) = if pretrained {
        let model = load_checkpoint(&pretrained_path(cfg, false))
            .with_context(|| format!("loading {}", pretrained_path(cfg, false).display()))?;
        let ev = evaluate_test_set(&model, &corpus.test)?;
        let row = ev.report.csv_row(&run_name(cfg), "pretrained");
        (cfg.run_dir.join("pretrained"), ev, row)
    } else {
        let dir = strategy_dir(cfg);
        let (ev, row) = evaluate_dir(cfg, &corpus, &dir, &cfg.train.strategy.to_string())?;
        (dir, ev, row)
    };
    std::fs::create_dir_all(&dir)?;
    let metrics = format!("{}\n{row}\n", MetricsReport::CSV_HEADER);
    std::fs::write(dir.join("metrics.csv"), &metrics)?;
    std::fs::write(dir.join("groups.csv"), groups_csv(&ev.per_group))?;
    let mut out = metrics;
    if let Some(path) = baseline_dump {
        out.push_str(&significance_lines(&ev, &read_groups_csv(path)?)?);
    }
    Ok(out)
}

fn format_value(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let param = cfg.sweep_param;
    let corpus = read_corpus(cfg)?;
    let root = cfg.run_dir.join(format!("sweep_{}", param.name()));
    let mut table = format!("{}\n", MetricsReport::CSV_HEADER);
    for &v in &cfg.sweep_values {
        let mut point = cfg.clone().with_strategy(param.strategy());
        match param {
            SweepParam::Lambda => point.train.lambda = Some(v),
            SweepParam::Delta => point.train.delta = Some(v),
        }
        point.validate()?;
        let dir = root.join(format_value(v));
        coteach_into(&point, &dir)?;
        let (_, row) = evaluate_dir(&point, &corpus, &dir, &format!("{}={}", param.name(), format_value(v)))?;
        println!("{row}");
        table.push_str(&row);
        table.push('\n');
    }
    let path = cfg.run_dir.join(format!("sweep_{}.csv", param.name()));
    std::fs::write(&path, table)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Column layout of `curves.csv`.
pub const CURVES_HEADER: &str =
    "iter,loss_A,loss_B,loss_A_ema,loss_B_ema,valid_P@1_A,valid_P@1_B,valid_P@1_A_ema,valid_P@1_B_ema";

/// EMA-smoothed training curves. Losses are smoothed over every iteration,
/// validation P@1 over the evaluated iterations only.
pub fn curves_csv(history: &RunHistory, alpha: f64) -> Result<String> {
    let recs = history.records();
    let col = |f: fn(&crate::engine::IterationRecord) -> f64| recs.iter().map(f).collect::<Vec<_>>();
    let la = ema(&col(|r| r.loss_a), alpha)?;
    let lb = ema(&col(|r| r.loss_b), alpha)?;
    let curve = history.validation_curve();
    let va = ema(&curve.iter().map(|c| c.1).collect::<Vec<_>>(), alpha)?;
    let vb = ema(&curve.iter().map(|c| c.2).collect::<Vec<_>>(), alpha)?;
    let mut out = format!("{CURVES_HEADER}\n");
    let mut k = 0;
    for (i, r) in recs.iter().enumerate() {
        let _ = write!(out, "{},{},{},{},{},", r.iter, r.loss_a, r.loss_b, la[i], lb[i]);
        match r.valid_p_at_1 {
            Some((a, b)) => {
                let _ = writeln!(out, "{a},{b},{},{}", va[k], vb[k]);
                k += 1;
            }
            None => out.push_str(",,,\n"),
        }
    }
    Ok(out)
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let dir = strategy_dir(cfg);
    let path = dir.join("history.csv");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let history = RunHistory::from_csv(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let out = dir.join("curves.csv");
    std::fs::write(&out, curves_csv(&history, cfg.ema_alpha)?)?;
    println!("wrote {} ({} iterations)", out.display(), history.len());
    Ok(())
}
