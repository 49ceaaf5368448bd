use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod run;

use config::RunConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "cqac", version, about = "Bifurcation branches and stationary covariances of the 2D cubic-quintic Allen-Cahn equation")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run described by a TOML config.
    Run {
        config: PathBuf,
        /// Override `output.dir`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Validate a config and print it with all defaults filled in.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Check { config } => match RunConfig::load(&config) {
            Ok(cfg) => {
                println!("{}", toml::to_string_pretty(&cfg).expect("config serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { config, output } => {
            let mut cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Some(dir) = output {
                cfg.output.dir = dir;
            }
            match run::run(&cfg) {
                Ok(report) => {
                    for a in &report.artifacts {
                        println!("{}", cfg.output.dir.join(a).display());
                    }
                    match report.failure {
                        None => ExitCode::SUCCESS,
                        Some(f) => {
                            eprintln!("numerical failure (partial artifacts written): {f}");
                            ExitCode::from(EXIT_NUMERICAL)
                        }
                    }
                }
                Err(run::RunError::Output(e)) => {
                    eprintln!("config error: output directory {}: {e}", cfg.output.dir.display());
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_NUMERICAL)
                }
            }
        }
    }
}
