use clap::Parser;

fn main() {
    let cli = radpair::cli::Cli::parse();
    std::process::exit(radpair::cli::main_with_args(cli));
}
