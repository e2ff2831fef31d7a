//! Argument parsing and the process entry point.

use crate::commands::{self, Output};
use crate::config::expand_args;
use crate::io::write_file;
use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "expectile", version, about = "Extreme expectile estimation, confidence regions and equality tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Per-margin tail index, expectile estimates and marginal intervals.
    Estimate(RunConfig),
    /// Joint confidence regions with boundary point clouds.
    Region(RunConfig),
    /// Equality tests on all margins and on every pair.
    Test(RunConfig),
    /// Trace of the extreme LAWS covariance over a range of k.
    TraceScan(RunConfig),
    /// Monte Carlo experiments on the reference models.
    Simulate(RunConfig),
    /// Validate a CSV file and turn dated prices into weekly negative log-returns.
    Ingest(RunConfig),
}

impl Command {
    pub fn config(&self) -> &RunConfig {
        match self {
            Self::Estimate(c) | Self::Region(c) | Self::Test(c) | Self::TraceScan(c) | Self::Simulate(c) | Self::Ingest(c) => c,
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
#[command(args_override_self = true)]
pub struct RunConfig {
    /// key = value file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// The first input column holds ISO-8601 dates.
    #[arg(long)]
    pub dates: bool,
    /// Number of top order statistics; τ = 1 - k/n.
    #[arg(long, conflicts_with = "tau")]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Extreme level, default 1 - 1/n.
    #[arg(long)]
    pub tau_prime: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// laws, qb or both (tests also accept quantile).
    #[arg(long, default_value = "both")]
    pub method: String,
    /// Ignore cross-margin dependence in regions, or drop the bias shift in intervals.
    #[arg(long)]
    pub naive: bool,
    /// intermediate or extreme.
    #[arg(long)]
    pub level: Option<String>,
    /// Margin groups by index or label, e.g. `0,1;0,1,2`. Default: every pair.
    #[arg(long)]
    pub margins: Option<String>,
    /// Covariance factor of the equality tests: unsquared or squared.
    #[arg(long, default_value = "unsquared")]
    pub scaling: String,
    /// `first:last[:step]` for trace-scan.
    #[arg(long)]
    pub k_range: Option<String>,
    /// clayton_frechet, gaussian_student, gumbel_frechet, multivariate_student,
    /// or univariate_frechet / univariate_pareto / univariate_student.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Tail indices: one value for every margin, or a comma list.
    #[arg(long)]
    pub gammas: Option<String>,
    /// mse, coverage, interval, power, tail-copula, or sample (one draw as CSV).
    #[arg(long, default_value = "mse")]
    pub task: String,
    /// Margin scored by the interval task.
    #[arg(long, default_value_t = 0)]
    pub margin: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Record wall-clock time in Monte Carlo reports.
    #[arg(long)]
    pub timing: bool,
    /// Ingest dated data without the weekly-return transform.
    #[arg(long)]
    pub raw: bool,
    /// Output directory; without it JSON goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses, runs and reports. Returns the process exit code: 0 on success,
/// 2 when some margin, pair, k or replication failed in-band, 1 on a hard
/// error.
pub fn run(args: Vec<String>) -> i32 {
    let args = match expand_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli.command).and_then(|out| emit(&out, cli.command.config())) {
        Ok(partial) if partial > 0 => {
            eprintln!("warning: {partial} partial failure(s), see the output for details");
            2
        }
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn emit(out: &Output, config: &RunConfig) -> crate::Result<usize> {
    let mut text = out.summary.clone();
    match &config.out {
        Some(dir) => {
            for (name, contents) in &out.files {
                write_file(&dir.join(name), contents)?;
            }
        }
        None => {
            for (name, contents) in out.files.iter().filter(|(name, _)| out.stdout_files.contains(name)) {
                text.push_str(&format!("# {name}\n{contents}"));
            }
        }
    }
    // A closed pipe (`| head`) is not an error worth reporting.
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(crate::Error::io("<stdout>", e)),
        _ => Ok(out.partial_failures),
    }
}
