use clap::Parser;

use bdris_csd::cli::{execute, exit_code, Cli};

fn main() {
    match execute(Cli::parse()) {
        Ok(msg) => println!("{msg}"),
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            std::process::exit(exit_code(&err));
        }
    }
}
