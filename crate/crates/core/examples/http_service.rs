//! Serves the HTTP API over a synthetic city.
//!
//! `cargo run --release --example http_service -- 8080`, then e.g.
//! `curl -s localhost:8080/query -d '{"sentence":"students during noon"}'`

use std::net::SocketAddr;

use trajecta::pipeline::{BuildOptions, Engine};
use trajecta::service::{serve, AppState};
use trajecta::synth::{generate, SynthConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let port: u16 = std::env::args().nth(1).map_or(Ok(8080), |p| p.parse())?;
    let data = generate(&SynthConfig::default())?;
    let engine = Engine::build(data.stations, data.pois, &data.records, &BuildOptions::default())?;
    serve(AppState::new(engine), SocketAddr::from(([127, 0, 0, 1], port))).await?;
    Ok(())
}
