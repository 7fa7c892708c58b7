use clap::Parser;

fn main() {
    let cli = covadj::cli::Cli::parse();
    std::process::exit(covadj::cli::run(cli));
}
