use std::process::ExitCode;

use chiral_pinem::cli::{exit_code, run, Args};
use clap::Parser;

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(m) => {
            eprintln!(
                "{} outputs written to {} in {:.2} s",
                m.outputs.len() + 1,
                m.config.output.dir.display(),
                m.wall_clock_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
