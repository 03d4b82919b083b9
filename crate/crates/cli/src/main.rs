use clap::Parser;

fn main() {
    let cli = pacrobust::cli::Cli::parse();
    std::process::exit(pacrobust::cli::run(cli));
}
