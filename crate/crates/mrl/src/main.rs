use clap::Parser;
use mrl::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.report());
        std::process::exit(e.exit_code());
    }
}
