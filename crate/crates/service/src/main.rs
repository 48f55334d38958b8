use std::net::{Ipv4Addr, SocketAddr};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use tracelab_core::defaults::Precision;
use tracelab_service::{router, AppState, ServiceConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Standard,
    Extended,
}

/// Serve the explorer API on 127.0.0.1.
#[derive(Debug, Parser)]
#[command(name = "tracelab-service", version)]
struct Args {
    #[arg(long, default_value_t = 8787)]
    port: u16,
    /// Origin of the explorer UI, the only one allowed by CORS.
    #[arg(long, default_value = "http://127.0.0.1:5173")]
    ui_origin: String,
    /// Time budget of synchronous requests, in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    budget_ms: u64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Standard)]
    precision: PrecisionArg,
}

#[tokio::main]
async fn main() -> Result<()> {
    let args = Args::parse();
    let defaults = ServiceConfig::default();
    let config = ServiceConfig {
        budget: Duration::from_millis(args.budget_ms),
        ui_origin: args.ui_origin,
        precision: match args.precision {
            PrecisionArg::Standard => Precision::Standard,
            PrecisionArg::Extended => Precision::Extended,
        },
        ..defaults
    };
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, args.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!(
        "tracelab-service listening on http://{}",
        listener.local_addr()?
    );
    axum::serve(listener, router(AppState::new(config))).await?;
    Ok(())
}
