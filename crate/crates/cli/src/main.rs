use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIMEFILTER_LOG", "warn")).init();
    let cli = timefilter_cli::Cli::parse();
    std::process::exit(timefilter_cli::run(cli));
}
