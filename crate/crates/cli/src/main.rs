use clap::Parser;
use mfdp_cli::args::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = mfdp_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
