use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POISSON_IDENT_LOG", "warn")).init();
    let cli = poisson_ident_cli::Cli::parse();
    std::process::exit(poisson_ident_cli::run(&cli));
}
