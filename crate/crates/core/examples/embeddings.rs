//! Trains word vectors from POI and region text, then lists neighbors.
//!
//! `cargo run --example embeddings -- students hospital`

use trajecta::embed::{DEFAULT_MIN_SIM, DEFAULT_NEIGHBORS};
use trajecta::model::Grouping;
use trajecta::nlq::Dictionaries;
use trajecta::pipeline::{embedding_corpus, ingest};
use trajecta::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let ing = ingest(&data.stations, &data.pois, &data.records, Grouping::PerUserPerDay, &Dictionaries::default())?;
    let space = trajecta::embed::train_embeddings(&embedding_corpus(&ing.documents), 16, 4, 0)?;
    println!("{} words, dim {}", space.len(), space.dim());

    let mut words: Vec<String> = std::env::args().skip(1).collect();
    if words.is_empty() {
        words = vec!["students".into(), "office".into(), "park".into()];
    }
    for w in &words {
        match space.neighbors(w, DEFAULT_NEIGHBORS, DEFAULT_MIN_SIM) {
            Ok(n) => {
                let list: Vec<String> = n.iter().map(|(x, s)| format!("{x} {s:.2}")).collect();
                println!("{w}: {}", list.join(", "));
            }
            Err(e) => println!("{w}: {e}"),
        }
    }
    Ok(())
}
