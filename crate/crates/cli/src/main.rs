use std::process::ExitCode;

use clap::Parser;
use markerslam::Cli;

fn main() -> ExitCode {
    match markerslam::run(&Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
