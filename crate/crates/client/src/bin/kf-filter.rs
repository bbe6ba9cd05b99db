use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use keyforge_client::filter::{self, FilterConfig, SignOptions};
use keyforge_client::KfClient;
use keyforge_core::mailproto::VerifyOutcome;

/// Mail filter: signs outgoing or verifies incoming messages read on stdin.
///
/// `sign` writes the signed message to stdout. `verify` writes the message back on success;
/// on failure it prints the reason code (e.g. `digest-mismatch`) and exits with status 1.
/// Operational errors exit with status 2.
#[derive(Parser)]
#[command(name = "kf-filter", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// Filter configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Clock override in UTC seconds; the key server must allow client clocks.
    #[arg(long, global = true)]
    now: Option<i64>,
    /// Key server endpoint, overriding the config: http://host:port or unix:/path.
    #[arg(long, global = true)]
    keyserver: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    Sign {
        /// Signing domain (default: config, then the From address).
        #[arg(long)]
        domain: Option<String>,
        /// Omit this many leading certificate levels (receivers fetch them as cached parameters).
        #[arg(long)]
        anchor: Option<usize>,
    },
    Verify,
}

async fn run(args: Args) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let config = match &args.config {
        Some(p) => FilterConfig::load(p)?,
        None => FilterConfig::default(),
    };
    let endpoint = args
        .keyserver
        .or(config.keyserver.clone())
        .unwrap_or_else(|| "http://127.0.0.1:8470".into());
    let client = KfClient::new(&endpoint)?;
    let mut raw = Vec::new();
    std::io::stdin().read_to_end(&mut raw)?;
    let mut stdout = std::io::stdout().lock();
    match args.cmd {
        Cmd::Sign { domain, anchor } => {
            let opts = SignOptions {
                domain: domain.or(config.domain),
                anchor: anchor.or(config.anchor),
                now: args.now,
            };
            stdout.write_all(&filter::sign_raw(&client, &raw, &opts).await?)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify => match filter::verify_raw(&client, &raw, args.now).await? {
            VerifyOutcome::Pass => {
                stdout.write_all(&raw)?;
                Ok(ExitCode::SUCCESS)
            }
            VerifyOutcome::Fail(reason) => {
                writeln!(stdout, "{reason}")?;
                Ok(ExitCode::from(1))
            }
        },
    }
}

#[tokio::main(flavor = "current_thread")]
async fn main() -> ExitCode {
    match run(Args::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kf-filter: {e}");
            ExitCode::from(2)
        }
    }
}
