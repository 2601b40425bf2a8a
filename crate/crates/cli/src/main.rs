use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gorelm_cli::commands::print;
use gorelm_cli::{
    cmd_prepare, cmd_report, cmd_run, cmd_search, CliError, CliResult, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "gorelm",
    version,
    about = "Train and compare outlier-robust extreme learning machines"
)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `base_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Split, normalize and contaminate the dataset.
    Prepare(Common),
    /// Cross-validated hyperparameter search on the clean training split.
    Search(Common),
    /// Repeated training runs for every method and outlier ratio.
    Run(Common),
    /// Summaries and significance tests over one or more results files.
    Report {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Treat each repetition as its own block in the significance tests.
        #[arg(long)]
        per_run: bool,
        /// `results.csv` files, one per dataset.
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

fn load(c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Prepare(c) => {
            for p in cmd_prepare(&load(&c)?, &c.out)? {
                print(&format!("wrote {}\n", p.display()));
            }
        }
        Command::Search(c) => {
            for s in cmd_search(&load(&c)?, &c.out)? {
                print(&format!(
                    "{}: reg = {}, alpha = {}, cv aRRMSE = {:.4}\n",
                    s.method, s.reg, s.alpha, s.cv_arrmse
                ));
            }
        }
        Command::Run(c) => {
            let recs = cmd_run(&load(&c)?, &c.out)?;
            let failed = recs.iter().filter(|r| !r.ok()).count();
            print(&format!(
                "{} runs, {} failed; wrote {}\n",
                recs.len(),
                failed,
                c.out.join("results.csv").display()
            ));
        }
        Command::Report {
            out,
            per_run,
            results,
        } => print(&cmd_report(&results, &out, per_run)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
