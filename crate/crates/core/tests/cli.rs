use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use tempfile::TempDir;

fn run(home: &Path, args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["trajecta".to_string(), "--home".into(), home.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = trajecta::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// A small workspace that went through every stage.
fn workspace() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        for stage in [
            &["synth", "--stations", "20", "--pois", "300", "--users", "24", "--days", "1"][..],
            &["ingest"],
            &["train-topics", "--topics", "4", "--iters", "100"],
            &["train-embed", "--dim", "8"],
            &["build-index"],
        ] {
            let (code, out, err) = run(dir.path(), stage);
            assert_eq!(code, 0, "{stage:?}: {err}");
            assert!(!out.trim().is_empty());
        }
        dir
    })
    .path()
}

#[test]
fn query_without_index_is_a_data_error() {
    let empty = tempfile::tempdir().unwrap();
    let (code, _, err) = run(empty.path(), &["query", "students"]);
    assert_eq!(code, 2);
    assert!(err.contains("index missing"), "{err}");
    assert!(err.contains("build-index"));
}

#[test]
fn ingest_without_data_names_the_stage() {
    let empty = tempfile::tempdir().unwrap();
    let (code, _, err) = run(empty.path(), &["ingest"]);
    assert_eq!(code, 2);
    assert!(err.contains("trajecta synth"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let home = workspace();
    assert_eq!(run(home, &["frobnicate"]).0, 1);
    assert_eq!(run(home, &["query"]).0, 1);
    assert_eq!(run(home, &["cluster"]).0, 1);
    let (code, out, _) = run(home, &["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("build-index"));
}

#[test]
fn request_errors_exit_one() {
    let home = workspace();
    let (code, _, err) = run(home, &["query", "  "]);
    assert_eq!(code, 1);
    assert!(err.contains("empty"));
    assert_eq!(run(home, &["query", "students", "--topic-weights", "1,0"]).0, 1);
    assert_eq!(run(home, &["similar", "nope", "nope"]).0, 1);
    assert_eq!(run(home, &["build-index", "--window", "0"]).0, 1);
}

#[test]
fn json_query_is_stable() {
    let home = workspace();
    let args = ["query", "Query trajectories of students during Jan. 10 2014", "--json"];
    let (code, first, err) = run(home, &args);
    assert_eq!(code, 0, "{err}");
    assert_eq!(first, run(home, &args).1);
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert!(v.get("timing_ms").is_none());
    assert!(!v["trajectories"].as_array().unwrap().is_empty());
}

#[test]
fn table_query_lists_ranks() {
    let (code, out, _) = run(workspace(), &["query", "students during noon", "--max-results", "3"]);
    assert_eq!(code, 0);
    assert!(out.contains("group #0 [students]"));
    assert!(out.lines().any(|l| l.trim_start().starts_with("1 ")));
}

#[test]
fn similar_to_itself_costs_nothing() {
    let home = workspace();
    let ids: Vec<String> = std::fs::read_to_string(home.join("docs/trajectories.jsonl"))
        .unwrap()
        .lines()
        .take(2)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["trajectory_id"].as_str().unwrap().to_string())
        .collect();
    let (code, out, _) = run(home, &["similar", &ids[0], &ids[0], "--json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["cost"].as_f64().unwrap(), 0.0);

    let ab = run(home, &["similar", &ids[0], &ids[1], "--json"]).1;
    let ba = run(home, &["similar", &ids[1], &ids[0], "--json"]).1;
    let cost = |s: &str| serde_json::from_str::<serde_json::Value>(s).unwrap()["cost"].as_f64().unwrap();
    assert_eq!(cost(&ab), cost(&ba));
    let unordered = run(home, &["similar", &ids[0], &ids[1], "--unordered", "--json"]).1;
    assert!(cost(&unordered) <= cost(&ab) + 1e-9);
}

#[test]
fn cluster_reports_every_trajectory() {
    let home = workspace();
    let (code, out, _) = run(home, &["cluster", "--k", "3", "--json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["centroids"].as_array().unwrap().len(), 3);
    let objective: Vec<f64> = v["objective"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(objective.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert_eq!(run(home, &["cluster", "--k", "100000"]).0, 1);
}

#[test]
fn load_embed_replaces_vectors() {
    let home = workspace();
    let file = home.join("custom_vectors.txt");
    std::fs::write(&file, "2 2\nstudents 1 0\ncanteen 1 0.1\n").unwrap();
    let copy = tempfile::tempdir().unwrap();
    for sub in ["data", "docs", "models", "index", "config"] {
        copy_dir(&home.join(sub), &copy.path().join(sub));
    }
    let (code, _, err) = run(copy.path(), &["load-embed", file.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let (_, out, _) = run(copy.path(), &["query", "students", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let augmented: Vec<&str> = v["groups"][0]["augmented"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w["word"].as_str().unwrap())
        .collect();
    assert_eq!(augmented, ["students", "canteen"]);
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &to.join(entry.file_name()));
        } else {
            std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
        }
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_trajecta");
    let empty = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args(["query", "students"])
        .env("TRAJECTA_HOME", empty.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    let status = Command::new(bin).arg("--version").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
}
