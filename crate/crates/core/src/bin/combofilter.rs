use clap::Parser;

use combofilter::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    std::process::exit(execute(cli));
}
