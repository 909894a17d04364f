use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = carvebot_harness::cli::Cli::parse();
    if let Err(e) = carvebot_harness::cli::execute(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
