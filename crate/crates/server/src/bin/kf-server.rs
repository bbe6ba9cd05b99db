use std::path::PathBuf;

use clap::Parser;
use keyforge_server::ServerConfig;

/// KeyForge key server.
#[derive(Parser)]
#[command(name = "kf-server", version)]
struct Args {
    /// Server configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let result = match ServerConfig::load(&args.config) {
        Ok(cfg) => keyforge_server::run(cfg).await,
        Err(e) => Err(e.into()),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kf-server: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
