//! Compares trajectories by their topic sequences with the ordered edit
//! distance and the unordered assignment relaxation.

use trajecta::pipeline::{BuildOptions, Engine};
use trajecta::synth::{generate, SynthConfig};
use trajecta::trajops::MatchWeights;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let engine = Engine::build(data.stations, data.pois, &data.records, &BuildOptions::default())?;
    let ids = engine.index().trajectory_ids();
    let probe = &ids[0];
    let weights = MatchWeights::default();

    let mut scored = Vec::new();
    for other in ids.iter().skip(1).take(60) {
        let ordered = engine.similar(probe, other, weights, true)?;
        let unordered = engine.similar(probe, other, weights, false)?;
        scored.push((ordered.cost, unordered.cost, other, ordered.matched.len()));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    println!("closest to {probe}:");
    for (o, u, id, m) in scored.iter().take(8) {
        println!("  {id:<16} ordered {o:8.3}  unordered {u:8.3}  {m} matched");
    }
    let view = engine.trajectory(probe)?;
    for s in &view.stopovers {
        println!("  stop {} for {} s", s.region_id, s.duration);
    }
    Ok(())
}
