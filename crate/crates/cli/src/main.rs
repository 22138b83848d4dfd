use std::path::PathBuf;
use std::process::ExitCode;

use cfl_cli::{run, Command, NumericalFailure, RunOptions};
use cfl_core::config::{ConfigErrors, RunConfig};
use clap::Parser;

/// Curved combustion fronts: batch runs writing CSV/JSON/CFLB1 artifacts.
///
/// Exit status: 0 when every check of the subcommand passes, 2 for an
/// invalid configuration, 3 for a numerical failure or a failed check.
#[derive(Debug, Parser)]
#[command(name = "cfl", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// parent directory of the run directory
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// worker threads
    #[arg(long, env = "CFL_THREADS")]
    threads: Option<usize>,
    /// seed for random sample placement
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let config = match RunConfig::load(&cli.config).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(errors) => {
            report_config(&errors);
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { out: cli.out, threads: cli.threads, seed: cli.seed };
    match run(cli.command, &config, &opts) {
        Ok(o) => {
            println!("{}: {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
            println!("run directory: {}", o.dir.display());
            if o.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("checks failed; diagnostics in {}", o.dir.display());
                ExitCode::from(3)
            }
        }
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigErrors>() {
                report_config(c);
                return ExitCode::from(2);
            }
            if let Some(f) = e.downcast_ref::<NumericalFailure>() {
                eprintln!("error: {f}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(3)
        }
    }
}

fn report_config(errors: &ConfigErrors) {
    eprintln!("invalid configuration:");
    for i in &errors.0 {
        eprintln!("  {i}");
    }
}
