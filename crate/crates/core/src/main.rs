use std::process::ExitCode;

use clap::Parser;
use mpemba::cli::{self, Cli, OUT_DIR_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_out = std::env::var_os(OUT_DIR_ENV).map(Into::into);
    match cli::run(cli, env_out) {
        Ok(report) => {
            println!("{}", report.summary);
            for f in &report.files {
                println!("wrote {}", report.out_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
