use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qhawkes_cli::{check_config, default_output, emit_report, load_config, run_experiment, CliError};

#[derive(Parser)]
#[command(name = "qhawkes", version, about = "Quadratic Hawkes experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs and manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Master seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the outputs of a previous run in the output directory.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarise a finished run.
    Report { run_dir: PathBuf },
    /// Validate a config and print its assumption report.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            workers,
            seed,
            force,
            output,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if output.is_some() {
                cfg.output = output;
            }
            cfg.validate()?;
            let dir = default_output(&cfg);
            let (manifest, summary) = run_experiment(&cfg, &dir, force)?;
            println!("{}: {} files in {}", summary.kind, manifest.files.len(), dir.display());
            for c in &summary.checks {
                println!("{} {}: {:.6e} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.condition);
            }
            Ok(())
        }
        Command::Report { run_dir } => {
            print!("{}", emit_report(&run_dir)?);
            Ok(())
        }
        Command::Check { config } => {
            let cfg = load_config(&config)?;
            let reports = qhawkes_cli::experiments::assumption_reports(&cfg);
            println!(
                "{}",
                serde_json::to_string_pretty(&reports).map_err(|e| CliError::Runtime(e.to_string()))?
            );
            let mut strict = cfg;
            strict.allow_unstable = false;
            check_config(&strict).map(|_| ())
        }
    }
}
