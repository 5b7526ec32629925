//! Generates a synthetic city and writes the four data files.
//!
//! `cargo run --example synth_city -- /tmp/city`

use trajecta::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth_city".into());
    let config = SynthConfig {
        n_users: 50,
        ..SynthConfig::default()
    };
    let data = generate(&config)?;
    data.write_to(std::path::Path::new(&out))?;

    println!("{} stations, {} POIs, {} records -> {out}", data.stations.len(), data.pois.len(), data.records.len());
    for u in data.ground_truth.users.iter().take(5) {
        println!("  {:<6} {:?} home {} work {}", u.user_id, u.kind, u.home, u.work);
    }
    Ok(())
}
