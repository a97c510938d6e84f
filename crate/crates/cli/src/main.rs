use std::io::Write;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use fairrank_cli::args::{Cli, Command, ServeArgs};
use fairrank_cli::{clock, commands, server, CliError};
use fairrank_core::Session;
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();

    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Audit(a) => commands::audit(a),
        Command::Perturb(a) => commands::perturb(a),
        Command::Compare(a) => commands::compare(a),
        Command::Serve(a) => serve(a).map(|()| String::new()),
    };
    match result {
        Ok(out) => {
            if !out.is_empty() {
                let mut stdout = std::io::stdout().lock();
                // a closed pipe (`| head`) is not an error worth reporting
                let _ = writeln!(stdout, "{out}").and_then(|()| stdout.flush());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let session = match &args.state_dir {
        Some(dir) => Session::open(dir)?,
        None => Session::new(),
    }
    .with_clock(clock);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| CliError::Config(format!("bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Config(e.to_string()))?;
        println!("{}", serde_json::json!({ "host": args.host, "port": addr.port() }));
        tracing::info!(%addr, "listening");
        axum::serve(listener, server::router(Arc::new(session)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Config(e.to_string()))
    })
}
