//! Shows how sentences become typed words, spatial groups and time windows.

use std::collections::HashMap;

use trajecta::model::format_timestamp;
use trajecta::nlq::{extract_constraints, Dictionaries, QueryDefaults};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dict = Dictionaries::default();
    let sentences = [
        "Query trajectories of students during Jan. 10 2014",
        "Query trajectories passed through Jiangxin island before Wuhua Building during January 25, 2014",
        "trajectories that pass hospital or clinic in the morning",
        "pass office after cafe during evening",
    ];
    for s in sentences {
        let c = extract_constraints(s, &dict, &QueryDefaults::default(), &HashMap::new())?;
        println!("{s}");
        let typed: Vec<String> = c.words.iter().map(|w| format!("{}/{:?}", w.text, w.kind)).collect();
        println!("  words   {}", typed.join(" "));
        for g in &c.groups {
            println!("  group   #{} {:?}", g.order_index, g.keywords);
        }
        println!("  combine {:?}", c.combinator);
        for w in c.windows.iter().filter(|w| !w.is_unbounded()) {
            println!("  window  {} .. {}", format_timestamp(w.start), format_timestamp(w.end));
        }
        for d in &c.daily {
            println!("  daily   {} {}s..{}s", d.word, d.start, d.end);
        }
    }
    Ok(())
}
