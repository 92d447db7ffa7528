//! Command-line front end: `rks constants`, `rks verify` and `rks sample`.
//!
//! Exit codes: 0 success, 1 diagnostic failure, 2 configuration error,
//! 3 infeasible parameters.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds::{
    chaining_constants, covering_count, covering_dimension, d_of, min_sample_size, success_probability,
    truncation_n, w_alpha, ChainingConstants,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiment::{
    failure_rate_experiment, sample_sweep, truncation_experiment, verify_suite, BoundSummary, Check,
    Laboratory, SweepRow, TrialReport, TruncationReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

pub const CONSTANTS_FILE: &str = "constants.json";
pub const VERIFY_FILE: &str = "verify.txt";
pub const REPORT_FILE: &str = "report.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "rks", version, about = "Random sampling experiments in reproducing kernel spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write every closed-form constant for a configuration.
    Constants(Common),
    /// Run kernel and space diagnostics; exit 1 if any fails.
    Verify(Common),
    /// Run the sampling experiment and write trial reports.
    Sample(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `[output] dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides `[experiment] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "RKS_THREADS")]
    pub threads: Option<usize>,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Contract(_) => EXIT_CONFIG,
        Error::Infeasible(_) | Error::Degenerate(_) => EXIT_INFEASIBLE,
        Error::NonFinite { .. } | Error::Io(_) | Error::Json(_) => EXIT_DIAGNOSTIC,
    }
}

/// Parses arguments and runs the subcommand; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let common = match &cli.command {
        Command::Constants(c) | Command::Verify(c) | Command::Sample(c) => c.clone(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = common.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", common.threads.unwrap_or(0));
            return EXIT_CONFIG;
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        pool.install(|| match &cli.command {
            Command::Constants(c) => cmd_constants(c),
            Command::Verify(c) => cmd_verify(c),
            Command::Sample(c) => cmd_sample(c),
        })
    }));
    match outcome {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            EXIT_DIAGNOSTIC
        }
    }
}

/// Effective configuration after command-line overrides.
pub fn effective_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.experiment.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        config.output.dir = dir.clone();
    }
    Ok(config)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_digest: String,
    tool_version: &'static str,
    timestamp: u64,
    files: &'a [&'a str],
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_manifest(config: &ExperimentConfig, files: &[&str]) -> Result<()> {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = Manifest {
        config_digest: config.digest(),
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp,
        files,
    };
    write_file(&config.output.dir, MANIFEST_FILE, &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

#[derive(Debug, Serialize)]
struct EpsRow {
    eps: f64,
    value: f64,
}

#[derive(Debug, Serialize)]
struct CoveringRow {
    eps: f64,
    d_eps: f64,
    log_n: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MuRow {
    mu: f64,
    min_r: f64,
}

/// Everything `constants` writes.
#[derive(Debug, Serialize)]
pub struct ConstantsDump {
    config_digest: String,
    kernel: &'static str,
    n: usize,
    p: f64,
    k: f64,
    d: f64,
    decay_amplitude: f64,
    alpha: f64,
    frame_bound: f64,
    n0: usize,
    eta: f64,
    w_alpha: f64,
    c_one: f64,
    truncation_n: Vec<EpsRow>,
    covering: Vec<CoveringRow>,
    chaining: ChainingConstants<f64>,
    min_r: Vec<MuRow>,
    success_at_config: BoundSummary,
    generator_seed: u64,
}

pub fn constants_dump(lab: &Laboratory<f64>) -> Result<ConstantsDump> {
    let ctx = &lab.context;
    let e = &lab.config.experiment;
    let mut eps_values: Vec<f64> = e.truncation_eps.iter().chain(&e.eps_grid).copied().collect();
    eps_values.sort_by(|a, b| b.total_cmp(a));
    eps_values.dedup();
    let truncation = eps_values
        .iter()
        .map(|&eps| Ok(EpsRow { eps, value: truncation_n(ctx, eps, 1.0)? }))
        .collect::<Result<Vec<_>>>()?;
    let covering = e
        .eps_grid
        .iter()
        .map(|&eps| {
            Ok(CoveringRow {
                eps,
                d_eps: covering_dimension(ctx, eps)?,
                log_n: covering_count(ctx, eps).ok().map(|c| c.log_value),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_r = e
        .mu_grid
        .iter()
        .filter(|&&mu| mu < 1.0 - e.delta)
        .map(|&mu| Ok(MuRow { mu, min_r: min_sample_size(ctx, mu)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConstantsDump {
        config_digest: lab.config.digest(),
        kernel: lab.kernel().family().tag(),
        n: ctx.n,
        p: ctx.p,
        k: ctx.k,
        d: d_of(ctx)?,
        decay_amplitude: ctx.decay_amplitude,
        alpha: ctx.alpha,
        frame_bound: ctx.frame_bound,
        n0: ctx.n0,
        eta: ctx.eta,
        w_alpha: w_alpha(ctx.alpha, ctx.p_conj, ctx.n)?,
        c_one: crate::bounds::c_one(ctx)?,
        truncation_n: truncation,
        covering,
        chaining: chaining_constants(ctx)?,
        min_r,
        success_at_config: success_probability(ctx, e.samples, e.mu)?.into(),
        generator_seed: e.seed,
    })
}

pub fn cmd_constants(common: &Common) -> Result<i32> {
    let config = effective_config(common)?;
    let lab = Laboratory::<f64>::new(&config)?;
    let dump = constants_dump(&lab)?;
    write_file(&config.output.dir, CONSTANTS_FILE, &(serde_json::to_string_pretty(&dump)? + "\n"))?;
    write_manifest(&config, &[CONSTANTS_FILE, MANIFEST_FILE])?;
    println!("wrote {}", config.output.dir.join(CONSTANTS_FILE).display());
    Ok(EXIT_OK)
}

/// The `verify` table.
pub fn verify_table(digest: &str, checks: &[Check]) -> String {
    let mut out = format!("# config_digest: {digest}\n");
    let _ = writeln!(out, "{:<52} {:>14} {:>14} {:>6}", "check", "value", "bound", "result");
    for c in checks {
        let result = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{:<52} {:>14.6e} {:>14.6e} {:>6}", c.name, c.value, c.bound, result);
    }
    out
}

pub fn cmd_verify(common: &Common) -> Result<i32> {
    let config = effective_config(common)?;
    let lab = Laboratory::<f64>::new(&config)?;
    let checks = verify_suite(&lab)?;
    let table = verify_table(&config.digest(), &checks);
    write_file(&config.output.dir, VERIFY_FILE, &table)?;
    write_manifest(&config, &[VERIFY_FILE, MANIFEST_FILE])?;
    print!("{table}");
    let failing: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failing.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("failing checks: {}", failing.join("; "));
        Ok(EXIT_DIAGNOSTIC)
    }
}

/// Per-row CSV with the digest on the first line.
pub fn trials_csv(digest: &str, report: &TrialReport) -> String {
    let mut out = format!("# config_digest: {digest}\ntrial,func_seed,S,lower,upper,success\n");
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.trial, r.func_seed, r.sum, r.lower, r.upper, r.success);
    }
    out
}

/// One aggregate row per sample count.
pub fn sweep_csv(digest: &str, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "# config_digest: {digest}\nsamples,trials,failures,failure_rate,wilson_low,wilson_high,bound_clamped,log_failure_bound,vacuous,gate\n"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.samples,
            r.trials,
            r.failures,
            r.failure_rate,
            r.wilson_low,
            r.wilson_high,
            r.bound.clamped,
            r.bound.log_failure_bound,
            r.bound.vacuous,
            r.bound.gate
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct SampleDocument<'a> {
    config_digest: String,
    report: &'a TrialReport,
    sweep: Vec<SweepRow>,
    truncation: Vec<TruncationReport>,
}

pub fn cmd_sample(common: &Common) -> Result<i32> {
    let config = effective_config(common)?;
    let lab = Laboratory::<f64>::new(&config)?;
    let e = &config.experiment;
    let truncation = e
        .truncation_eps
        .iter()
        .map(|&eps| truncation_experiment(&lab, eps, e.truncation_members))
        .collect::<Result<Vec<_>>>()?;
    let report = failure_rate_experiment(&lab)?;
    let sweep: Vec<SweepRow> = if e.sweep_samples.is_empty() {
        Vec::new()
    } else {
        sample_sweep(&lab, &e.sweep_samples)?.iter().map(SweepRow::from).collect()
    };
    let digest = config.digest();
    let dir = &config.output.dir;
    let mut files = vec![REPORT_FILE, TRIALS_FILE];
    write_file(dir, TRIALS_FILE, &trials_csv(&digest, &report))?;
    if !sweep.is_empty() {
        write_file(dir, SWEEP_FILE, &sweep_csv(&digest, &sweep))?;
        files.push(SWEEP_FILE);
    }
    let doc = SampleDocument { config_digest: digest, report: &report, sweep, truncation };
    write_file(dir, REPORT_FILE, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    files.push(MANIFEST_FILE);
    write_manifest(&config, &files)?;
    println!(
        "{} trials at r = {}: {} failures (rate {:.4}, 95% CI [{:.4}, {:.4}]); bound {}",
        report.trials,
        report.samples,
        report.failures,
        report.failure_rate,
        report.wilson_low,
        report.wilson_high,
        if report.bound.vacuous { "vacuous".to_string() } else { format!("{:.6}", report.bound.clamped) }
    );
    Ok(EXIT_OK)
}
