use clap::Parser;

fn main() {
    let cli = tabseq_cli::Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(tabseq_cli::run(&cli));
}
