use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use infofilter_cli::config::validate_file;
use infofilter_cli::experiments;
use infofilter_cli::suite::{run_criterion, Scale};
use infofilter_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "infofilter", version, about = "Run filtering and information experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its CSV tables.
    Run { config: PathBuf },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Run the acceptance criteria.
    Suite {
        #[arg(value_enum)]
        scale: SuiteScale,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteScale {
    Fast,
    Full,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => {
            let result = ExperimentConfig::load(&config).and_then(|cfg| experiments::run(&cfg));
            match result {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Validate { config } => {
            let errors = validate_file(&config);
            if errors.is_empty() {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            } else {
                for e in &errors {
                    eprintln!("{}: {e}", config.display());
                }
                ExitCode::from(2)
            }
        }
        Command::Suite { scale } => {
            let scale = match scale {
                SuiteScale::Fast => Scale::Fast,
                SuiteScale::Full => Scale::Full,
            };
            let mut failed = 0;
            for id in 1..=10 {
                let outcome = run_criterion(id, scale);
                println!("{outcome}");
                failed += usize::from(!outcome.passed);
            }
            println!("{} of 10 criteria passed", 10 - failed);
            if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
        }
    }
}
