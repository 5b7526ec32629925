//! Extracts home and work regions per user, checks them against the
//! generator's ground truth and clusters users by home/work topics.

use trajecta::model::{assemble_trajectories, Grouping};
use trajecta::pipeline::{BuildOptions, Engine};
use trajecta::synth::{generate, SynthConfig};
use trajecta::trajops::{extract_home_work, HomeWorkHours};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SynthConfig::default())?;
    let truth = data.home_work();
    let options = BuildOptions {
        grouping: Grouping::PerUser,
        ..BuildOptions::default()
    };
    let engine = Engine::build(data.stations.clone(), data.pois.clone(), &data.records, &options)?;

    let users = assemble_trajectories(&data.records, &data.stations, Grouping::PerUser)?;
    let hours = HomeWorkHours::default();
    let correct = users
        .iter()
        .filter(|t| {
            let hw = extract_home_work(t, engine.topics(), &hours);
            let (h, w) = truth[t.user_id.as_str()];
            hw.home.as_deref() == Some(h) && hw.work.as_deref() == Some(w)
        })
        .count();
    println!("home/work recovered for {correct}/{} users", users.len());

    let report = engine.cluster(4, 0, 100)?;
    for (c, centroid) in report.centroids.iter().enumerate() {
        let n = report.members.iter().filter(|m| m.cluster == c).count();
        let t = centroid.len() / 2;
        let top = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        let labels = &engine.topics().topic_labels;
        println!(
            "cluster {c}: {n:>3} users, home ~ {}, work ~ {}",
            labels[top(&centroid[..t])],
            labels[top(&centroid[t..])]
        );
    }
    println!("objective {:?}", report.objective.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>());
    Ok(())
}
