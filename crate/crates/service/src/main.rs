use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use patterncraft_service::{serve, ServiceConfig};

#[derive(Parser)]
#[command(name = "patterncraft-service", version, about = "Serve the pattern labelling and generation API")]
struct Args {
    #[arg(long, env = "PATTERNCRAFT_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "PATTERNCRAFT_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, env = "PATTERNCRAFT_DATA_DIR", default_value = "patterncraft-data")]
    data_dir: PathBuf,
    #[arg(long, env = "PATTERNCRAFT_MAX_PARALLEL_JOBS", default_value_t = 1)]
    max_parallel_jobs: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let config = ServiceConfig { max_parallel_jobs: args.max_parallel_jobs, ..ServiceConfig::new(args.data_dir) };
    serve(config, SocketAddr::new(args.host, args.port)).await
}
