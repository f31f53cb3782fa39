use clap::Parser;

use speqrng_cli::{exit, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            println!("{}", report.display());
            std::process::exit(exit::OK);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
