//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{ConfigError, RunConfig};
use crate::diagnostics::summarize;
use crate::error::Error;
use crate::io::{chain_file_name, summarize_files, write_samples_file, ChainEntry, RunSummary, SUMMARY_FILE};
use crate::sampler::run_chain_on_stream;
use crate::verify::{run_suite, Suite, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DRIFT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "geomc",
    version,
    about = "Geodesic Monte Carlo on the sphere and Stiefel manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `sampler.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for concurrent chains (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured chains and write samples plus a summary.
    Sample(RunArgs),
    /// Run a built-in verification suite.
    Verify {
        /// linalg, gradients, reduction, reversibility, statistical or all.
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Chain length for the statistical suite.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = crate::diagnostics::DEFAULT_Z_THRESHOLD)]
        z_threshold: f64,
    },
    /// Recompute summaries from sample files and print them as JSON.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        /// Sample files; defaults to the chain files in the output directory.
        files: Vec<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(Error::DriftTooLarge { .. }) => EXIT_DRIFT,
            CliError::Core(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.chain.seed = seed;
    }
    if let Some(dir) = &args.output {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Runs every chain, writes `chain_{i}.csv` files and `summary.json`, and
/// returns the summary.
pub fn cmd_sample(args: &RunArgs) -> Result<RunSummary, CliError> {
    let cfg = load(args)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let dim = cfg.manifold.ambient_dim();
    let run_one = |i: usize| -> Result<ChainEntry, CliError> {
        let out = run_chain_on_stream(&cfg.chain, &cfg.target, &cfg.mass, &cfg.initial, i as u64)?;
        let file = chain_file_name(i);
        write_samples_file(&cfg.output_dir.join(&file), dim, &out)?;
        Ok(ChainEntry {
            file,
            summary: summarize(&cfg.manifold, &out.samples, &out.records)?,
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Io("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    let chains = pool.install(|| {
        (0..cfg.n_chains)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<Vec<_>, _>>()
    })?;
    let summary = RunSummary { chains };
    let path = cfg.output_dir.join(SUMMARY_FILE);
    std::fs::write(&path, summary.to_json()).map_err(|e| io_err(&path, e))?;
    Ok(summary)
}

pub fn cmd_diagnose(args: &RunArgs, files: &[PathBuf]) -> Result<RunSummary, CliError> {
    let cfg = load(args)?;
    let files: Vec<PathBuf> = if files.is_empty() {
        (0..cfg.n_chains)
            .map(|i| cfg.output_dir.join(chain_file_name(i)))
            .collect()
    } else {
        files.to_vec()
    };
    Ok(summarize_files(&cfg.manifold, &files)?)
}

/// Prints one line per check; returns whether all passed.
pub fn cmd_verify<W: Write>(suite: &str, opts: &VerifyOptions, out: &mut W) -> Result<bool, CliError> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse::<Suite>().map_err(CliError::Io)?]
    };
    let mut all_passed = true;
    for s in suites {
        writeln!(out, "[{}]", s.name()).map_err(|e| CliError::Io(e.to_string()))?;
        for check in run_suite(s, opts)? {
            all_passed &= check.passed();
            writeln!(out, "{check}").map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(all_passed)
}

/// Dispatches `cli` and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Sample(args) => cmd_sample(args).map(|s| {
            let n: usize = s.chains.iter().map(|c| c.summary.n_samples).sum();
            println!("wrote {} chain(s), {n} samples", s.chains.len());
            EXIT_OK
        }),
        Command::Diagnose { run, files } => cmd_diagnose(run, files).map(|s| {
            print!("{}", s.to_json());
            EXIT_OK
        }),
        Command::Verify {
            suite,
            seed,
            samples,
            z_threshold,
        } => {
            let opts = VerifyOptions {
                seed: *seed,
                samples: *samples,
                z_threshold: *z_threshold,
            };
            cmd_verify(suite, &opts, &mut std::io::stdout().lock()).map(|ok| if ok { EXIT_OK } else { EXIT_FAILURE })
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
