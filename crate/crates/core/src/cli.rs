//! `trajecta` command line. Exit codes: 0 success, 1 usage or request
//! error, 2 missing or broken workspace data.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::index::DEFAULT_WINDOW_SIZE;
use crate::model::{format_timestamp, Grouping};
use crate::pipeline::{stages, EmbedOptions, Engine, EngineError, ErrorClass, QueryRequest, WorkspaceLayout};
use crate::service::{serve, AppState};
use crate::synth::SynthConfig;
use crate::topics::LdaConfig;
use crate::trajops::MatchWeights;

#[derive(Debug, Parser)]
#[command(name = "trajecta", version, about = "Semantic search over spatially uncertain trajectories")]
pub struct Cli {
    /// Workspace root (default: $TRAJECTA_HOME, then the current directory).
    #[arg(long, global = true)]
    pub home: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic city and population into data/.
    Synth {
        #[arg(long, default_value_t = 60)]
        stations: usize,
        #[arg(long, default_value_t = 2400)]
        pois: usize,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 2)]
        days: usize,
        #[arg(long, default_value = "2014-01-10")]
        start_date: NaiveDate,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Assemble trajectories and write trajectory/region/POI documents.
    Ingest {
        #[arg(long, default_value = "per-user-per-day")]
        grouping: Grouping,
    },
    /// Train the region topic model.
    TrainTopics {
        #[arg(long, default_value_t = 6)]
        topics: usize,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train word vectors from the workspace documents.
    TrainEmbed {
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 4)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Use an existing word-vector text file.
    LoadEmbed { file: PathBuf },
    /// Build the time-partitioned index.
    BuildIndex {
        #[arg(long, default_value_t = DEFAULT_WINDOW_SIZE)]
        window: i64,
    },
    /// Answer a natural-language query.
    Query {
        sentence: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        topic_weights: Option<Vec<f64>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_results: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Topic-sequence distance between two trajectories.
    Similar {
        id_a: String,
        id_b: String,
        #[arg(long, default_value_t = 1.0)]
        w1: f64,
        #[arg(long, default_value_t = 1.0)]
        w2: f64,
        #[arg(long)]
        unordered: bool,
        #[arg(long)]
        json: bool,
    },
    /// K-means over home/work topic features.
    Cluster {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

fn exit_code(e: &EngineError) -> i32 {
    match e.class() {
        ErrorClass::Request | ErrorClass::NotFound => 1,
        ErrorClass::Data => 2,
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    let layout = cli.home.clone().map(WorkspaceLayout::new).unwrap_or_else(WorkspaceLayout::from_env);
    match execute(cli.command, &layout, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: Command, layout: &WorkspaceLayout, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), EngineError> {
    let say = |out: &mut dyn Write, line: String| {
        let _ = writeln!(out, "{line}");
    };
    match command {
        Command::Synth {
            stations,
            pois,
            users,
            days,
            start_date,
            seed,
        } => {
            let config = SynthConfig {
                n_stations: stations,
                n_pois: pois,
                n_users: users,
                n_days: days,
                start_date,
                seed,
                ..SynthConfig::default()
            };
            say(out, stages::synth(layout, &config)?);
        }
        Command::Ingest { grouping } => say(out, stages::ingest(layout, grouping)?),
        Command::TrainTopics { topics, iters, seed } => {
            let config = LdaConfig {
                iters,
                ..LdaConfig::new(topics, seed)
            };
            say(out, stages::train_topics(layout, &config)?);
        }
        Command::TrainEmbed { dim, window, seed } => {
            say(out, stages::train_embed(layout, &EmbedOptions { dim, window, seed })?)
        }
        Command::LoadEmbed { file } => say(out, stages::load_embed(layout, &file)?),
        Command::BuildIndex { window } => {
            if window <= 0 {
                return Err(EngineError::BadParameter("--window must be positive".into()));
            }
            say(out, stages::build_index(layout, window)?)
        }
        Command::Query {
            sentence,
            alpha,
            beta,
            topic_weights,
            k,
            max_results,
            json,
        } => {
            let engine = Engine::load(layout)?;
            let request = QueryRequest {
                sentence,
                alpha,
                beta,
                topic_weights,
                k,
                word_overrides: None,
                max_results,
            };
            let response = engine.query(&request)?;
            let _ = writeln!(err, "{} matches in {:.1} ms", response.total, response.timing_ms);
            if json {
                // Timing varies run to run; keep stdout reproducible.
                let mut value = serde_json::to_value(&response).expect("serializable");
                if let Some(obj) = value.as_object_mut() {
                    obj.remove("timing_ms");
                }
                say(out, to_json(&value));
            } else {
                for g in &response.groups {
                    let pois: Vec<&str> = g.pois.iter().take(3).map(|p| p.name.as_str()).collect();
                    say(out, format!("group #{} [{}]: {}", g.order_index, g.keywords.join(" "), pois.join("; ")));
                }
                say(out, format!("{:>4}  {:<24} {:>9}  {:>7}  first match", "rank", "trajectory", "relevance", "points"));
                for (rank, t) in response.trajectories.iter().enumerate() {
                    let first = t
                        .matched
                        .iter()
                        .flatten()
                        .map(|m| m.timestamp)
                        .min()
                        .map(format_timestamp)
                        .unwrap_or_default();
                    say(
                        out,
                        format!(
                            "{:>4}  {:<24} {:>9.4}  {:>7}  {}",
                            rank + 1,
                            t.trajectory_id,
                            t.relevance,
                            t.points.len(),
                            first
                        ),
                    );
                }
            }
        }
        Command::Similar {
            id_a,
            id_b,
            w1,
            w2,
            unordered,
            json,
        } => {
            let engine = Engine::load(layout)?;
            let result = engine.similar(&id_a, &id_b, MatchWeights { w1, w2 }, !unordered)?;
            if json {
                say(out, to_json(&result));
            } else {
                say(
                    out,
                    format!(
                        "cost {:.6} ({} matched, {} + {} unmatched)",
                        result.cost,
                        result.matched.len(),
                        result.unmatched_a.len(),
                        result.unmatched_b.len()
                    ),
                );
            }
        }
        Command::Cluster { k, seed, max_iters, json } => {
            let engine = Engine::load(layout)?;
            let report = engine.cluster(k, seed, max_iters)?;
            if json {
                say(out, to_json(&report));
            } else {
                let mut sizes = vec![0usize; report.centroids.len()];
                for m in &report.members {
                    sizes[m.cluster] += 1;
                }
                for (c, n) in sizes.iter().enumerate() {
                    say(out, format!("cluster {c}: {n} trajectories"));
                }
                if let Some(obj) = report.objective.last() {
                    say(out, format!("objective {obj:.6} after {} iterations", report.objective.len()));
                }
            }
        }
        Command::Serve { port, host } => {
            let engine = Engine::load(layout)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|source| EngineError::Io {
                path: layout.root.clone(),
                source,
            })?;
            runtime
                .block_on(serve(AppState::new(engine), SocketAddr::new(host, port)))
                .map_err(|source| EngineError::Io {
                    path: PathBuf::from(format!("{host}:{port}")),
                    source,
                })?;
        }
    }
    Ok(())
}
