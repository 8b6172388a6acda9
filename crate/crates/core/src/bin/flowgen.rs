use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use octflow::cli::{self, Command};

/// Structural OCT to flow pipeline driven by TOML run configs.
#[derive(Parser)]
#[command(name = "flowgen", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML run config; relative paths in it resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; existing outputs are never overwritten.
    #[arg(long)]
    run_dir: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match cli::run(args.command, &args.config, &args.run_dir) {
        Ok(hash) => {
            println!("{} done config_sha256={hash} run_dir={}", args.command.name(), args.run_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", cli::error_line(&e));
            ExitCode::FAILURE
        }
    }
}
