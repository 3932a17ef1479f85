use clap::Parser;
use oda_cli::Cli;

fn main() {
    let cli = Cli::parse();
    std::process::exit(oda_cli::run(&cli));
}
