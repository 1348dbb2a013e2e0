use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oslr_cli::commands::{self, Outcome};
use oslr_cli::config::RunConfig;
use oslr_cli::csvio::read_subjects_file;
use oslr_cli::parallel::Parallel;
use oslr_cli::CliError;

#[derive(Parser)]
#[command(name = "oslr", version, about = "One-sample log-rank test: design, analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Subject CSV for `analyze`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// JSON report path; `simulate` also writes a CSV next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `simulate` (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replications, overrides the config.
    #[arg(long, global = true)]
    replications: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample size or accrual period for a planned trial.
    Design,
    /// Run the pre-specified test on subject data.
    Analyze,
    /// Monte Carlo level and power.
    Simulate,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let mut config = RunConfig::from_path(path)?;
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.replications.is_some() {
        config.replications = cli.replications;
    }
    let simulate = matches!(cli.command, Command::Simulate);
    if cli.workers.is_some() && !simulate {
        return Err(CliError::Usage("--workers only applies to 'simulate'".into()));
    }
    if cli.data.is_some() != matches!(cli.command, Command::Analyze) {
        return Err(CliError::Usage("--data is required by 'analyze' and used by no other command".into()));
    }
    let outcome: Outcome = match cli.command {
        Command::Design => commands::design(&config)?,
        Command::Analyze => {
            let data = cli.data.as_deref().expect("checked above");
            commands::analyze(&config, read_subjects_file(data)?)?
        }
        Command::Simulate => commands::simulate(&config, &Parallel::new(cli.workers)?)?,
    };
    print!("{}", outcome.summary);
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &cli.out {
        outcome.report.write(out)?;
        if let Some(csv) = &outcome.csv {
            let csv_path = out.with_extension("csv");
            std::fs::write(&csv_path, csv).map_err(|e| CliError::Io {
                path: csv_path.clone(),
                source: e,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
