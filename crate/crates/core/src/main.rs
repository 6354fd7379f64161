use std::process::ExitCode;

use clap::Parser;
use edgesched::cli::{main_with, Args};

fn main() -> ExitCode {
    match main_with(Args::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("edgesched: {e}");
            ExitCode::FAILURE
        }
    }
}
