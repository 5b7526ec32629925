//! Fits LDA on region documents and prints each topic's top words and the
//! topic mix of a few regions.

use trajecta::model::Grouping;
use trajecta::nlq::Dictionaries;
use trajecta::pipeline::{ingest, train_topics};
use trajecta::synth::{generate, SynthConfig};
use trajecta::topics::LdaConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let ing = ingest(&data.stations, &data.pois, &data.records, Grouping::PerUserPerDay, &Dictionaries::default())?;
    let model = train_topics(&ing.documents.regions, &LdaConfig::new(6, 1))?;

    for t in 0..model.topics {
        let words: Vec<String> = model.top_words(t, 5).into_iter().map(|(w, p)| format!("{w}:{p:.2}")).collect();
        println!("{:<24} {}", model.topic_labels[t], words.join(" "));
    }
    for (region, q) in model.theta.iter().take(4) {
        let mix: Vec<String> = q.iter().map(|x| format!("{x:.2}")).collect();
        println!("{region}: [{}]", mix.join(", "));
    }
    Ok(())
}
