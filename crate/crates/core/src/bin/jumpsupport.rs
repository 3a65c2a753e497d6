use clap::Parser;
use jumpsupport::cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
