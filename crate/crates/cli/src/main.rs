use clap::Parser;
use plmp_cli::app::{execute, Cli};

fn main() {
    // Usage errors exit with status 2 inside `parse`.
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
