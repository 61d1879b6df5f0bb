//! `mtprobe`: extract editable segments, generate capability test cases,
//! judge MT systems on them and report pass rates.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtprobe_core::report::ReportFormat;

use commands::Failure;
use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "mtprobe", version, about = "Behavioral testing of machine translation systems")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "mtprobe.toml")]
    config: PathBuf,
    #[command(flatten)]
    overrides: OverrideArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct OverrideArgs {
    /// Minimum quality of the original translation.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Maximum quality difference between the two translations.
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Noun, Verb, Adj, Adv, Prep, Others, Tense, NER or General.
    #[arg(long, global = true)]
    capability: Option<String>,
    /// Test cases drawn per pair (1..=20).
    #[arg(long, global = true)]
    per_pair: Option<usize>,
    /// Concurrent backend calls.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_root: Option<PathBuf>,
    /// Leave cases failing the base-quality threshold out of pass rates.
    #[arg(long, global = true)]
    exclude_low_base: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the editable segments of every pair.
    Extract,
    /// Mask, infill and filter test cases.
    Generate,
    /// Translate, score and judge cases with every configured system.
    Judge,
    /// Re-judge stored scores over an alpha/beta grid.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7, 0.8])]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.08, 0.11])]
        betas: Vec<f64>,
    },
    /// Precision/recall of verdicts against gold error annotations.
    Eval {
        #[arg(long)]
        gold: PathBuf,
    },
    /// Re-render the capability report from stored verdicts.
    Report {
        #[arg(long, default_value = "markdown", value_parser = parse_format)]
        format: ReportFormat,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Self {
            alpha: a.alpha,
            beta: a.beta,
            seed: a.seed,
            capability: a.capability,
            per_pair: a.per_pair,
            jobs: a.jobs,
            output_dir: a.output_dir,
            cache_root: a.cache_root,
            exclude_low_base: a.exclude_low_base,
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = RunConfig::load(&cli.config, &cli.overrides.into()).map_err(Failure::Usage)?;
    match cli.command {
        Command::Extract => commands::extract(&config),
        Command::Generate => commands::generate(&config),
        Command::Judge => commands::judge(&config),
        Command::Sweep { alphas, betas } => commands::sweep(&config, &alphas, &betas),
        Command::Eval { gold } => commands::eval(&config, &gold),
        Command::Report { format } => commands::report(&config, format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
