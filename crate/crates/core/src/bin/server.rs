use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use railgate_core::clock::system_clock;
use railgate_core::engine::config::EngineConfig;
use railgate_core::engine::http::HttpServer;
use railgate_core::engine::Engine;

/// Ticket-sale engine server.
#[derive(Parser)]
#[command(name = "railgate-server", version)]
struct Args {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match &args.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(text) => text,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            };
            match EngineConfig::from_toml(&text) {
                Ok(config) => config,
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    return ExitCode::FAILURE;
                }
            }
        }
        None => EngineConfig::default(),
    };

    let engine = match Engine::new(config, system_clock()) {
        Ok(engine) => engine,
        Err(e) => {
            eprintln!("engine startup failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    engine.start_background();
    engine.drain_cdc();

    let server = match HttpServer::start(engine.clone()) {
        Ok(server) => server,
        Err(e) => {
            eprintln!("cannot bind {}: {e}", engine.config.listen_addr);
            return ExitCode::FAILURE;
        }
    };
    println!("railgate listening on {}", server.base_url());
    println!(
        "seeded {} train plan(s), {} user(s)",
        engine.config.seed.trains.len(),
        engine.config.seed.users.len()
    );

    loop {
        std::thread::park();
    }
}
