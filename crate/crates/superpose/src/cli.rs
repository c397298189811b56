//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::{parse_config, Method};
use crate::error::{Error, Result};
use crate::experiment::{evaluate_saved, export_augmented, run_compare, run_experiment};
use crate::report::emit_report;

#[derive(Parser)]
#[command(
    name = "superpose",
    about = "Quantum-superposition data augmentation experiments (LSTM and HMM)",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an augmented dataset from a config and save it as an SMFX file.
    Augment {
        /// Experiment config (key=value file).
        #[arg(long)]
        config: PathBuf,
        /// Destination SMFX file.
        #[arg(long)]
        output: PathBuf,
    },
    /// Run one experiment and write summary.csv / curves.csv / provenance.txt.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-evaluate the model saved by a previous `train` run of this config.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one experiment per method and write a single merged report.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated methods, e.g. none,mixup,superposition.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Augment { config, output } => {
            let cfg = parse_config(&config)?;
            let n = export_augmented(&cfg, &output)?;
            println!("wrote {n} samples to {}", output.display());
            Ok(())
        }
        Command::Train { config } => {
            let cfg = parse_config(&config)?;
            let report = run_experiment(&cfg)?;
            emit_report(&report, &cfg.output_dir)?;
            for row in &report.rows {
                println!(
                    "{} [{}] n={} train {:.2}% test {:.2}%",
                    row.dataset,
                    row.augmentation,
                    row.n_samples,
                    row.train_acc * 100.0,
                    row.test_acc * 100.0
                );
            }
            println!("report written to {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Eval { config } => {
            let cfg = parse_config(&config)?;
            let acc = evaluate_saved(&cfg)?;
            println!("test accuracy {:.2}%", acc * 100.0);
            Ok(())
        }
        Command::Compare { config, methods } => {
            let cfg = parse_config(&config)?;
            if methods.is_empty() {
                return Err(Error::Config("--methods must list at least one method".into()));
            }
            let methods: Vec<Method> = methods
                .iter()
                .map(|m| Method::parse(m.trim()))
                .collect::<Result<_>>()?;
            let report = run_compare(&cfg, &methods)?;
            emit_report(&report, &cfg.output_dir)?;
            for row in &report.rows {
                println!(
                    "{} [{}] n={} train {:.2}% test {:.2}%",
                    row.dataset,
                    row.augmentation,
                    row.n_samples,
                    row.train_acc * 100.0,
                    row.test_acc * 100.0
                );
            }
            println!("report written to {}", cfg.output_dir.display());
            Ok(())
        }
    }
}

/// Parses argv and runs the selected subcommand, mapping errors to exit
/// codes: 2 for usage/config problems, 1 for runtime failures.
pub fn cli_main(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
