//! Command-line driver: experiment runs, bound tables and concentration checks.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use robai::sim::ConcParams;
use robai::RewardFamily;

use commands::{resolve_config, ConcRequest, RunOverrides};
use config::ExperimentConfig;
use error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "robai",
    version,
    about = "Regret-optimal best-arm identification experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate every configured policy and write regret.csv, commit.csv, meta.json.
    Run(RunArgs),
    /// Tabulate the closed-form bounds over the config's horizon grid into bounds.csv.
    Bounds(BoundsArgs),
    /// Monte Carlo check of a concentration lemma, written to conc.csv.
    ConcCheck(ConcArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config, a bundled config name, or a meta.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 picks automatically.
    #[arg(long, env = "ROBAI_THREADS", default_value_t = 0)]
    threads: usize,
    /// Overrides the config's master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's iteration count.
    #[arg(long)]
    iterations: Option<u64>,
    /// Overrides the config's horizon.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConcArgs {
    /// One of 3a, 3b, 3c, 5.
    #[arg(long)]
    lemma: String,
    #[arg(long)]
    l: f64,
    #[arg(long)]
    t1: f64,
    #[arg(long)]
    t2: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Reward mean for lemma 5.
    #[arg(long, default_value_t = 0.3)]
    mean: f64,
    /// Reward family for lemma 5.
    #[arg(long, default_value = "bernoulli")]
    family: String,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "ROBAI_THREADS", default_value_t = 0)]
    threads: usize,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(a) => {
            let config = ExperimentConfig::from_file(&resolve_config(&a.config))?;
            let overrides = RunOverrides {
                seed: a.seed,
                iterations: a.iterations,
                horizon: a.horizon,
                threads: a.threads,
            };
            commands::cmd_run(&config, &a.out, &overrides)?;
        }
        Command::Bounds(a) => {
            let config = ExperimentConfig::from_file(&resolve_config(&a.config))?;
            commands::cmd_bounds(&config, &a.out)?;
        }
        Command::ConcCheck(a) => {
            let family: RewardFamily = a.family.parse()?;
            // Lemma 3 is about standard normal noise whatever --family says.
            let family = if a.lemma_is_gaussian() {
                RewardFamily::GaussianUnitVariance
            } else {
                family
            };
            let req = ConcRequest {
                lemma: a.lemma,
                params: ConcParams {
                    l: a.l,
                    t1: a.t1,
                    t2: a.t2,
                    delta: a.delta,
                    mean: a.mean,
                },
                family,
                trials: a.trials,
                seed: a.seed,
            };
            with_threads(a.threads, || commands::cmd_conc_check(&req, &a.out))?;
        }
    }
    Ok(())
}

impl ConcArgs {
    fn lemma_is_gaussian(&self) -> bool {
        self.lemma.starts_with('3') || self.lemma.starts_with("lemma3")
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon_pool(threads)?;
    pool.install(f)
}

fn rayon_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| error::CliError::Invalid(format!("threads: {e}")))
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("robai: {e}");
            e.exit_code()
        }
    }
}
