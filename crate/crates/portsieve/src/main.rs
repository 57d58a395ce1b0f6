use clap::Parser;

fn main() {
    env_logger::init();
    let cli = portsieve::cli::Cli::parse();
    std::process::exit(portsieve::cli::run(cli));
}
