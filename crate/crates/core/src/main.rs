mod cli;

use clap::Parser;

fn main() {
    let cli = cli::Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = cli::run(cli) {
        // One line on stderr, whatever the message looks like.
        let msg = e.to_string().lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" | ");
        eprintln!("error: kind={} exit={}: {msg}", e.kind(), e.exit_code());
        std::process::exit(e.exit_code());
    }
}
