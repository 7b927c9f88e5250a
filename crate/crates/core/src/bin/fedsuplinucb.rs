use clap::Parser;
use fedsuplinucb::cli::{run_command, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run_command(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
