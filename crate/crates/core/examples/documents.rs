//! Turns raw records into trajectory, region and POI documents.

use trajecta::model::Grouping;
use trajecta::nlq::Dictionaries;
use trajecta::pipeline::ingest;
use trajecta::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let ing = ingest(&data.stations, &data.pois, &data.records, Grouping::PerUserPerDay, &Dictionaries::default())?;
    let docs = &ing.documents;
    println!(
        "{} trajectory docs, {} region docs, {} POI docs",
        docs.trajectories.len(),
        docs.regions.len(),
        docs.pois.len()
    );

    let t = &docs.trajectories[0];
    println!("{}:", t.trajectory_id);
    for e in t.entries.iter().step_by(12) {
        let names: Vec<String> = e.poi_names.iter().take(2).map(|n| n.join(" ")).collect();
        println!("  {} {:<8} {:<6} {}", e.timestamp, e.time_word, e.station_id, names.join(", "));
    }
    let r = &docs.regions[0];
    println!("region {}: {:?}", r.region_id, r.word_counts());
    Ok(())
}
