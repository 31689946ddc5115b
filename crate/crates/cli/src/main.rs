use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use minifair_core::data::Group;
use minifair_core::experiment::{self, ExperimentConfig, Mode};
use minifair_core::ingest::{self, DatasetFormat};
use minifair_core::StrategyKind;

/// Simulate data minimization by active rating elicitation and measure the
/// per-group accuracy of the resulting recommender.
#[derive(Debug, Parser)]
#[command(name = "minifair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a strategy x mode x seed grid and write traces, a summary table
    /// and plot data.
    Run(RunArgs),
    /// Print size, density and group counts of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "ml-1m")]
        format: DatasetFormat,
        #[arg(long, default_value_t = 5)]
        k_core: usize,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML configuration file. Flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Strategy name; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<StrategyKind>,
    /// Seed; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// `original` or `equal-ratio`; repeat or comma-separate for both.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<Mode>,
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<DatasetFormat>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "MINIFAIR_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    query_size: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.strategy.is_empty() {
            cfg.strategies = self.strategy.clone();
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if !self.mode.is_empty() {
            cfg.modes = self.mode.clone();
        }
        if let Some(d) = &self.dataset {
            cfg.dataset_path = d.clone();
        }
        if let Some(f) = self.format {
            cfg.dataset_format = f;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(n) = self.max_iterations {
            cfg.sim.max_iterations = Some(n);
        }
        if let Some(n) = self.eval_every {
            cfg.sim.eval_every = n;
        }
        if let Some(q) = self.query_size {
            cfg.sim.query_size = q;
            cfg.personalized_query_size = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let summary = experiment::run_experiment(&cfg).context("experiment failed")?;
    log::info!(
        "wrote {} traces, {} and {}",
        summary.runs.len(),
        summary.summary_path.display(),
        summary.plot_path.display()
    );
    Ok(())
}

fn stats(dataset: PathBuf, format: DatasetFormat, k_core: usize) -> Result<()> {
    let raw = ingest::parse_ratings(&dataset.join(format.ratings_file()), format)?;
    let groups = ingest::parse_users(&dataset.join(format.users_file()), format)?;
    let filtered = ingest::k_core_filter(&raw, k_core);
    if filtered.is_empty() {
        bail!("nothing left after {k_core}-core filtering");
    }
    let ds = ingest::Dataset::from_raw(&filtered, &groups)?;
    let count = |g: Group| {
        let users = ds.groups.iter().filter(|&(_, x)| x == g).count();
        let ratings = ds
            .ratings
            .iter()
            .filter(|x| ds.groups.get(x.user) == Some(g))
            .count();
        (users, ratings)
    };
    let (pu, pr) = count(Group::Protected);
    let (uu, ur) = count(Group::Unprotected);
    println!("raw_ratings\t{}", raw.len());
    println!("users\t{}", ds.n_users());
    println!("items\t{}", ds.n_items());
    println!("ratings\t{}", ds.ratings.len());
    println!("density\t{:.6}", ds.density());
    println!("protected_users\t{pu}");
    println!("protected_ratings\t{pr}");
    println!("unprotected_users\t{uu}");
    println!("unprotected_ratings\t{ur}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Stats {
            dataset,
            format,
            k_core,
        } => stats(dataset, format, k_core),
        Command::DefaultConfig => ExperimentConfig::default()
            .to_toml_string()
            .map(|s| print!("{s}"))
            .map_err(Into::into),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
