//! Builds the time-partitioned index, persists it, and runs keyword plus
//! time-window lookups against a reloaded copy.

use std::time::Instant;

use trajecta::index::TemporalTextualIndex;
use trajecta::model::{format_timestamp, Grouping, TimeWindow};
use trajecta::nlq::Dictionaries;
use trajecta::pipeline::ingest;
use trajecta::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let ing = ingest(&data.stations, &data.pois, &data.records, Grouping::PerUserPerDay, &Dictionaries::default())?;
    let index = TemporalTextualIndex::build(&ing.documents.trajectories, 600)?;
    let dir = std::env::temp_dir().join("trajecta_index_example");
    index.save(&dir)?;
    let index = TemporalTextualIndex::load(&dir)?;
    println!("{} partitions of {} s in {}", index.partition_count(), index.window_size(), dir.display());

    let day = index.span().start;
    for (key, from, to) in [("university", 8, 10), ("restaurant", 12, 13), ("morning", 0, 24), ("s0003", 0, 48)] {
        let w = TimeWindow::new(day + from * 3600, day + to * 3600).unwrap();
        let mut probes = 0;
        let parts = index.lookup_partitions_probed(&w, &mut |_| probes += 1);
        let t = Instant::now();
        let hits = index.retrieve(&[key], &[w]);
        println!(
            "{key:<10} {} .. {}: {} trajectories, {} partitions ({probes} probes), {:.2} ms",
            format_timestamp(w.start),
            format_timestamp(w.end),
            hits.len(),
            parts.len(),
            t.elapsed().as_secs_f64() * 1e3
        );
    }
    Ok(())
}
