//! Generates a small synthetic city, runs every stage in memory and answers
//! a natural-language query.

use trajecta::pipeline::{BuildOptions, Engine, QueryRequest};
use trajecta::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let engine = Engine::build(data.stations, data.pois, &data.records, &BuildOptions::default())?;

    let sentence = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Query trajectories of students during Jan. 10 2014".to_string());
    let response = engine.query(&QueryRequest::new(sentence.as_str()))?;

    println!("sentence: {sentence}");
    for g in &response.groups {
        println!("group #{} {:?}", g.order_index, g.keywords);
        for kw in g.augmented.iter().skip(g.keywords.len()) {
            println!("  neighbor {} ({:.2})", kw.word, kw.weight);
        }
        for p in g.pois.iter().take(3) {
            println!("  {:<32} region {} score {:.3}", p.name, p.scored.region_id, p.scored.score);
        }
    }
    println!("{} trajectories in {:.1} ms", response.total, response.timing_ms);
    for t in response.trajectories.iter().take(10) {
        println!("  {:<16} {:.3}", t.trajectory_id, t.relevance);
    }
    Ok(())
}
