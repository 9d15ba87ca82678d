//! Thin command-line front end over the library: `run` executes a config
//! grid, `verify` runs the property battery, `families` lists distribution
//! families. Exit codes: 0 success, 1 verification or bound failure,
//! 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use demask::config::OutputFormat;
use demask::runner::{self, Overrides};
use demask::verify::Suite;

#[derive(Parser)]
#[command(name = "demask", version, about = "exact decoding-schedule simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment grid described by a JSON config file.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the output format (csv|json).
        #[arg(long)]
        format: Option<String>,
        /// Worker pool size.
        #[arg(long)]
        threads: Option<usize>,
        /// Override the sequence-enumeration cap (table entries).
        #[arg(long = "cap-seqs")]
        cap_seqs: Option<u64>,
        /// Override the permutation-enumeration cap.
        #[arg(long = "cap-perms")]
        cap_perms: Option<u64>,
    },
    /// Run the property battery and print residuals and bound slacks.
    Verify {
        /// Which groups to run (lemmas|theorems|all).
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List distribution families and their parameter schemas.
    Families {
        /// Output format (text|json).
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            format,
            threads,
            cap_seqs,
            cap_perms,
        } => {
            let format = match format.map(|f| f.parse::<OutputFormat>()).transpose() {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let overrides = Overrides {
                seed,
                out,
                format,
                threads,
                cap_seqs,
                cap_perms,
            };
            match runner::cmd_run(&config, &overrides) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(runner::exit_code(&e) as u8)
                }
            }
        }
        Command::Verify {
            suite,
            seed,
            threads,
        } => {
            let suite: Suite = match suite.parse() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let results = runner::cmd_verify(suite, seed, threads);
            if results.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Families { format } => {
            let json = match format.as_str() {
                "json" => true,
                "text" => false,
                other => {
                    eprintln!("error: unknown format {other:?}, expected text|json");
                    return ExitCode::from(2);
                }
            };
            match runner::cmd_families(json) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(runner::exit_code(&e) as u8)
                }
            }
        }
    }
}
