use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = agentplan_cli::Cli::parse();
    let code = agentplan_cli::execute(&cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
