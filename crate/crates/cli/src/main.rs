use clap::Parser;

fn main() {
    std::process::exit(elig_cli::main_with(elig_cli::Cli::parse()));
}
