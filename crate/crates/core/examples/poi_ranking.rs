//! Ranks POIs for a keyword with BM25, then again with a topic preference,
//! showing how the regional term moves results.
//!
//! `cargo run --example poi_ranking -- canteen`

use trajecta::pipeline::{BuildOptions, Engine};
use trajecta::relevance::WeightedKeyword;
use trajecta::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let engine = Engine::build(data.stations, data.pois, &data.records, &BuildOptions::default())?;
    let word = std::env::args().nth(1).unwrap_or_else(|| "canteen".into());
    let keywords = [WeightedKeyword::original(&word)];
    let topics = engine.topics();
    let lookup = |r: &str| topics.region_vector(r).map(<[f64]>::to_vec);

    let plain = engine.corpus().top_k(&keywords, &lookup, &[], 1.0, 0.0, 5);
    println!("BM25 only:");
    for p in &plain {
        println!("  {:<8} {:<6} {:.3}", p.poi_id, p.region_id, p.score);
    }
    for t in 0..topics.topics {
        let mut preferred = vec![0.0; topics.topics];
        preferred[t] = 1.0;
        let ranked = engine.corpus().top_k(&keywords, &lookup, &preferred, 0.6, 0.4, 3);
        let ids: Vec<String> = ranked.iter().map(|p| format!("{}@{} {:.3}", p.poi_id, p.region_id, p.score)).collect();
        println!("prefer {:<24} {}", topics.topic_labels[t], ids.join("  "));
    }
    Ok(())
}
