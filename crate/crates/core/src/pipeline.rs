//! Workspace stages and the query engine shared by the CLI and the service.
//!
//! A workspace is a directory laid out as
//!
//! ```text
//! data/    stations.csv pois.csv records.csv [ground_truth.json]
//! docs/    trajectories.jsonl regions.jsonl pois.jsonl assignment.json
//! models/  lda.json vectors.txt
//! index/   meta.json p<k>.postings p<k>.docs.jsonl
//! config/  dictionaries.json topic_labels.json
//! ```
//!
//! Every stage reads the previous stage's files and writes its own, so each
//! can be re-run on its own.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::docgen::{build_documents, read_jsonl, tokenize, write_jsonl, Documents, PoiDocument, RegionDocument, TrajectoryDocument};
use crate::embed::{load_embeddings, train_embeddings, EmbedError, EmbeddingSpace};
use crate::index::{IndexError, MatchedPoint, TemporalTextualIndex, DEFAULT_WINDOW_SIZE};
use crate::model::{
    assemble_trajectories, read_pois, read_records, read_stations, Grouping, ModelError, Poi, RawRecord, Station,
    Trajectory,
};
use crate::nlq::{extract_constraints, Dictionaries, NlqError, QueryConstraints, QueryDefaults, WordKind};
use crate::psr::{annotate_pois, assign_regions, voronoi_polygons, BBox, Projection, PsrError, RegionAssignment};
use crate::relevance::{top_k_pois, AugmentConfig, PoiCorpus, RelevanceError, ScoredPoi, WeightedKeyword};
use crate::synth::{generate, SynthConfig, SynthData, SynthError};
use crate::topics::{train_lda, LdaConfig, TopicError, TopicModel};
use crate::trajops::{
    distance_ordered, distance_unordered, extract_home_work, kmeans, stopovers, HomeWorkHours, MatchResult,
    MatchWeights, Stopover, TrajOpsError,
};

pub const HOME_ENV: &str = "TRAJECTA_HOME";
pub const DEFAULT_MAX_RESULTS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{artifact} missing: {} not found; run `trajecta {stage}` first", path.display())]
    Missing {
        artifact: &'static str,
        stage: &'static str,
        path: PathBuf,
    },
    #[error(transparent)]
    Nlq(#[from] NlqError),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
    #[error("topic_weights has {got} entries, model has {expected} topics")]
    TopicWeightLength { expected: usize, got: usize },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("unknown trajectory {0:?}")]
    UnknownTrajectory(String),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Psr(#[from] PsrError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    TrajOps(#[from] TrajOpsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// How a caller should treat an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The request itself is at fault (bad sentence, weights, ...).
    Request,
    NotFound,
    /// Inputs on disk are missing or broken.
    Data,
}

impl EngineError {
    pub fn name(&self) -> &'static str {
        match self {
            EngineError::Missing { .. } => "Missing",
            EngineError::Nlq(e) => e.name(),
            EngineError::Relevance(e) => e.name(),
            EngineError::TopicWeightLength { .. } => "TopicWeightLength",
            EngineError::BadParameter(_) => "BadParameter",
            EngineError::UnknownTrajectory(_) => "UnknownTrajectory",
            EngineError::UnknownRegion(_) => "UnknownRegion",
            EngineError::Model(e) => e.name(),
            EngineError::Psr(e) => e.name(),
            EngineError::Topic(e) => e.name(),
            EngineError::Embed(e) => e.name(),
            EngineError::Index(e) => e.name(),
            EngineError::Synth(_) => "Synth",
            EngineError::TrajOps(e) => e.name(),
            EngineError::Io { .. } => "Io",
            EngineError::Json { .. } => "Json",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            EngineError::Nlq(_)
            | EngineError::Relevance(_)
            | EngineError::TopicWeightLength { .. }
            | EngineError::BadParameter(_)
            | EngineError::TrajOps(_) => ErrorClass::Request,
            EngineError::UnknownTrajectory(_) | EngineError::UnknownRegion(_) => ErrorClass::NotFound,
            _ => ErrorClass::Data,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, EngineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| EngineError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EngineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| EngineError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EngineError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_jsonl(BufReader::new(file)).map_err(io_err(path))
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), EngineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_jsonl(BufWriter::new(file), items).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkspaceLayout {
    pub root: PathBuf,
}

impl WorkspaceLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        WorkspaceLayout { root: root.into() }
    }

    /// `$TRAJECTA_HOME`, or the current directory.
    pub fn from_env() -> Self {
        WorkspaceLayout::new(std::env::var_os(HOME_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn stations_csv(&self) -> PathBuf {
        self.root.join("data/stations.csv")
    }
    pub fn pois_csv(&self) -> PathBuf {
        self.root.join("data/pois.csv")
    }
    pub fn records_csv(&self) -> PathBuf {
        self.root.join("data/records.csv")
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.root.join("data/ground_truth.json")
    }
    pub fn trajectory_docs(&self) -> PathBuf {
        self.root.join("docs/trajectories.jsonl")
    }
    pub fn region_docs(&self) -> PathBuf {
        self.root.join("docs/regions.jsonl")
    }
    pub fn poi_docs(&self) -> PathBuf {
        self.root.join("docs/pois.jsonl")
    }
    pub fn assignment(&self) -> PathBuf {
        self.root.join("docs/assignment.json")
    }
    pub fn lda(&self) -> PathBuf {
        self.root.join("models/lda.json")
    }
    pub fn vectors(&self) -> PathBuf {
        self.root.join("models/vectors.txt")
    }
    pub fn index_dir(&self) -> PathBuf {
        self.root.join("index")
    }
    pub fn dictionaries(&self) -> PathBuf {
        self.root.join("config/dictionaries.json")
    }
    pub fn topic_labels(&self) -> PathBuf {
        self.root.join("config/topic_labels.json")
    }

    pub fn require(&self, path: PathBuf, artifact: &'static str, stage: &'static str) -> Result<PathBuf, EngineError> {
        if path.exists() {
            Ok(path)
        } else {
            Err(EngineError::Missing { artifact, stage, path })
        }
    }

    /// Configured dictionaries, falling back to the built-in ones.
    pub fn load_dictionaries(&self) -> Result<Dictionaries, EngineError> {
        let path = self.dictionaries();
        if path.exists() {
            read_json(&path)
        } else {
            Ok(Dictionaries::default())
        }
    }

    fn load_raw(&self) -> Result<(Vec<Station>, Vec<Poi>), EngineError> {
        let stations_path = self.require(self.stations_csv(), "stations", "synth")?;
        let pois_path = self.require(self.pois_csv(), "pois", "synth")?;
        let stations = read_stations(fs::File::open(&stations_path).map_err(io_err(&stations_path))?)?;
        let pois = read_pois(fs::File::open(&pois_path).map_err(io_err(&pois_path))?)?;
        Ok((stations, pois))
    }
}

/// Trajectory, region and POI documents plus the POI-to-region map.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub trajectories: Vec<Trajectory>,
    pub assignment: RegionAssignment,
    pub pois: Vec<Poi>,
    pub documents: Documents,
}

pub fn ingest(
    stations: &[Station],
    pois: &[Poi],
    records: &[RawRecord],
    grouping: Grouping,
    dictionaries: &Dictionaries,
) -> Result<Ingested, EngineError> {
    let trajectories = assemble_trajectories(records, stations, grouping)?;
    let assignment = assign_regions(stations, pois)?;
    let mut pois = pois.to_vec();
    annotate_pois(&mut pois, &assignment);
    let documents = build_documents(&trajectories, stations, &assignment, &pois, dictionaries);
    Ok(Ingested {
        trajectories,
        assignment,
        pois,
        documents,
    })
}

/// Topic model over region documents; regions without words get the
/// uniform mix.
pub fn train_topics(regions: &[RegionDocument], config: &LdaConfig) -> Result<TopicModel, EngineError> {
    let model = train_lda(regions, config)?;
    Ok(model.with_empty_regions(regions.iter().map(|r| r.region_id.as_str())))
}

/// Embedding corpus: each POI's tokens, and each region's category words.
pub fn embedding_corpus(documents: &Documents) -> Vec<Vec<String>> {
    documents
        .pois
        .iter()
        .map(|p| p.tokens.clone())
        .chain(documents.regions.iter().filter(|r| !r.words.is_empty()).map(|r| r.words.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub dim: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            dim: 16,
            window: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub grouping: Grouping,
    pub lda: LdaConfig,
    /// `None` skips embedding training; queries then use only literal words.
    pub embed: Option<EmbedOptions>,
    pub window_size: i64,
    pub dictionaries: Dictionaries,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            grouping: Grouping::default(),
            lda: LdaConfig::new(6, 0),
            embed: Some(EmbedOptions::default()),
            window_size: DEFAULT_WINDOW_SIZE,
            dictionaries: Dictionaries::default(),
        }
    }
}

/// Workspace stages. Each returns a one-line human summary.
pub mod stages {
    use super::*;

    pub fn synth(layout: &WorkspaceLayout, config: &SynthConfig) -> Result<String, EngineError> {
        let data: SynthData = generate(config)?;
        data.write_to(&layout.data_dir())?;
        Ok(format!(
            "wrote {} stations, {} POIs, {} records for {} users to {}",
            data.stations.len(),
            data.pois.len(),
            data.records.len(),
            data.ground_truth.users.len(),
            layout.data_dir().display()
        ))
    }

    pub fn ingest(layout: &WorkspaceLayout, grouping: Grouping) -> Result<String, EngineError> {
        let (stations, pois) = layout.load_raw()?;
        let records_path = layout.require(layout.records_csv(), "records", "synth")?;
        let records = read_records(fs::File::open(&records_path).map_err(io_err(&records_path))?)?;
        let dictionaries = layout.load_dictionaries()?;
        if !layout.dictionaries().exists() {
            write_json(&layout.dictionaries(), &dictionaries)?;
        }
        let out = super::ingest(&stations, &pois, &records, grouping, &dictionaries)?;
        write_lines(&layout.trajectory_docs(), &out.documents.trajectories)?;
        write_lines(&layout.region_docs(), &out.documents.regions)?;
        write_lines(&layout.poi_docs(), &out.documents.pois)?;
        write_json(&layout.assignment(), &out.assignment)?;
        let points: usize = out.trajectories.iter().map(|t| t.points.len()).sum();
        Ok(format!(
            "{} trajectories ({} points), {} regions, {} POI documents",
            out.trajectories.len(),
            points,
            out.documents.regions.len(),
            out.documents.pois.len()
        ))
    }

    pub fn train_topics(layout: &WorkspaceLayout, config: &LdaConfig) -> Result<String, EngineError> {
        let path = layout.require(layout.region_docs(), "region documents", "ingest")?;
        let regions: Vec<RegionDocument> = read_lines(&path)?;
        let model = super::train_topics(&regions, config)?;
        write_json(&layout.lda(), &model)?;
        write_json(&layout.topic_labels(), &model.topic_labels)?;
        Ok(format!("{} topics: {}", model.topics, model.topic_labels.join(", ")))
    }

    pub fn train_embed(layout: &WorkspaceLayout, options: &EmbedOptions) -> Result<String, EngineError> {
        let regions_path = layout.require(layout.region_docs(), "region documents", "ingest")?;
        let pois_path = layout.require(layout.poi_docs(), "POI documents", "ingest")?;
        let documents = Documents {
            trajectories: Vec::new(),
            regions: read_lines(&regions_path)?,
            pois: read_lines(&pois_path)?,
        };
        let space = train_embeddings(&embedding_corpus(&documents), options.dim, options.window, options.seed)?;
        save_vectors(layout, &space)?;
        Ok(format!("{} word vectors of dimension {}", space.len(), space.dim()))
    }

    pub fn load_embed(layout: &WorkspaceLayout, file: &Path) -> Result<String, EngineError> {
        let reader = BufReader::new(fs::File::open(file).map_err(io_err(file))?);
        let space = load_embeddings(reader)?;
        save_vectors(layout, &space)?;
        Ok(format!("{} word vectors of dimension {}", space.len(), space.dim()))
    }

    fn save_vectors(layout: &WorkspaceLayout, space: &EmbeddingSpace) -> Result<(), EngineError> {
        let path = layout.vectors();
        fs::create_dir_all(path.parent().expect("models dir")).map_err(io_err(&path))?;
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        space.write_text(BufWriter::new(file)).map_err(io_err(&path))
    }

    pub fn build_index(layout: &WorkspaceLayout, window_size: i64) -> Result<String, EngineError> {
        let path = layout.require(layout.trajectory_docs(), "trajectory documents", "ingest")?;
        let docs: Vec<TrajectoryDocument> = read_lines(&path)?;
        let index = TemporalTextualIndex::build(&docs, window_size)?;
        index.save(&layout.index_dir())?;
        Ok(format!(
            "{} trajectories in {} partitions of {} s",
            index.trajectory_ids().len(),
            index.partition_count(),
            window_size
        ))
    }
}

/// Search request; everything but the sentence is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryRequest {
    pub sentence: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub topic_weights: Option<Vec<f64>>,
    pub k: Option<usize>,
    pub word_overrides: Option<HashMap<String, WordKind>>,
    pub max_results: Option<usize>,
}

impl QueryRequest {
    pub fn new(sentence: impl Into<String>) -> Self {
        QueryRequest {
            sentence: sentence.into(),
            ..QueryRequest::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiHit {
    #[serde(flatten)]
    pub scored: ScoredPoi,
    pub name: String,
    pub category: String,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub keywords: Vec<String>,
    pub order_index: usize,
    /// Constraint words plus embedding neighbors.
    pub augmented: Vec<WeightedKeyword>,
    pub pois: Vec<PoiHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointView {
    pub station_id: String,
    pub timestamp: i64,
    pub lon: f64,
    pub lat: f64,
    pub topics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHit {
    pub trajectory_id: String,
    pub relevance: f64,
    pub matched: Vec<Vec<MatchedPoint>>,
    pub points: Vec<PointView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub constraints: QueryConstraints,
    pub groups: Vec<GroupResult>,
    /// Number of matching trajectories before `max_results` truncation.
    pub total: usize,
    pub trajectories: Vec<TrajectoryHit>,
    pub timing_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionView {
    pub station_id: String,
    pub lon: f64,
    pub lat: f64,
    pub topics: Vec<f64>,
    pub poi_count: usize,
    /// Voronoi cell as `[lon, lat]` vertices.
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryView {
    pub trajectory_id: String,
    pub user_id: String,
    pub points: Vec<PointView>,
    pub stopovers: Vec<Stopover>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicView {
    pub index: usize,
    pub label: String,
    pub top_words: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub trajectory_id: String,
    pub home: Option<String>,
    pub work: Option<String>,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub members: Vec<ClusterMember>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: Vec<f64>,
}

/// Immutable snapshot of everything a query needs.
#[derive(Debug)]
pub struct Engine {
    dictionaries: Dictionaries,
    augment: AugmentConfig,
    stations: Vec<Station>,
    station_pos: HashMap<String, usize>,
    pois: HashMap<String, Poi>,
    region_poi_count: HashMap<String, usize>,
    corpus: PoiCorpus,
    topics: TopicModel,
    embeddings: Option<EmbeddingSpace>,
    index: TemporalTextualIndex,
    polygons: OnceLock<HashMap<String, Vec<[f64; 2]>>>,
}

impl Engine {
    pub fn new(
        dictionaries: Dictionaries,
        stations: Vec<Station>,
        pois: Vec<Poi>,
        poi_docs: Vec<PoiDocument>,
        topics: TopicModel,
        embeddings: Option<EmbeddingSpace>,
        index: TemporalTextualIndex,
    ) -> Result<Engine, EngineError> {
        let pois: HashMap<String, Poi> = pois.into_iter().map(|p| (p.id.clone(), p)).collect();
        let mut regions = Vec::with_capacity(poi_docs.len());
        let mut region_poi_count: HashMap<String, usize> = HashMap::new();
        for d in &poi_docs {
            let region = pois
                .get(&d.poi_id)
                .and_then(|p| p.region_id.clone())
                .ok_or_else(|| EngineError::UnknownRegion(format!("no region for POI {}", d.poi_id)))?;
            *region_poi_count.entry(region.clone()).or_default() += 1;
            regions.push(region);
        }
        let station_pos = stations.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        Ok(Engine {
            dictionaries,
            augment: AugmentConfig::default(),
            stations,
            station_pos,
            pois,
            region_poi_count,
            corpus: PoiCorpus::new(poi_docs, regions),
            topics,
            embeddings,
            index,
            polygons: OnceLock::new(),
        })
    }

    /// Runs every stage in memory.
    pub fn build(
        stations: Vec<Station>,
        pois: Vec<Poi>,
        records: &[RawRecord],
        options: &BuildOptions,
    ) -> Result<Engine, EngineError> {
        let ingested = ingest(&stations, &pois, records, options.grouping, &options.dictionaries)?;
        let topics = train_topics(&ingested.documents.regions, &options.lda)?;
        let embeddings = match &options.embed {
            Some(o) => Some(train_embeddings(&embedding_corpus(&ingested.documents), o.dim, o.window, o.seed)?),
            None => None,
        };
        let index = TemporalTextualIndex::build(&ingested.documents.trajectories, options.window_size)?;
        Engine::new(
            options.dictionaries.clone(),
            stations,
            ingested.pois,
            ingested.documents.pois,
            topics,
            embeddings,
            index,
        )
    }

    /// Loads a workspace prepared by the stages. Vectors are optional.
    pub fn load(layout: &WorkspaceLayout) -> Result<Engine, EngineError> {
        let index_dir = layout.index_dir();
        layout.require(index_dir.join("meta.json"), "index", "build-index")?;
        let lda = layout.require(layout.lda(), "topic model", "train-topics")?;
        let poi_docs = layout.require(layout.poi_docs(), "POI documents", "ingest")?;
        let assignment_path = layout.require(layout.assignment(), "region assignment", "ingest")?;
        let (stations, mut pois) = layout.load_raw()?;
        let assignment: RegionAssignment = read_json(&assignment_path)?;
        annotate_pois(&mut pois, &assignment);
        let embeddings = if layout.vectors().exists() {
            let path = layout.vectors();
            Some(load_embeddings(BufReader::new(fs::File::open(&path).map_err(io_err(&path))?))?)
        } else {
            None
        };
        Engine::new(
            layout.load_dictionaries()?,
            stations,
            pois,
            read_lines(&poi_docs)?,
            read_json(&lda)?,
            embeddings,
            TemporalTextualIndex::load(&index_dir)?,
        )
    }

    pub fn index(&self) -> &TemporalTextualIndex {
        &self.index
    }

    pub fn topics(&self) -> &TopicModel {
        &self.topics
    }

    pub fn embeddings(&self) -> Option<&EmbeddingSpace> {
        self.embeddings.as_ref()
    }

    pub fn dictionaries(&self) -> &Dictionaries {
        &self.dictionaries
    }

    pub fn corpus(&self) -> &PoiCorpus {
        &self.corpus
    }

    fn region_topics(&self, region: &str) -> Vec<f64> {
        self.topics
            .region_vector(region)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| self.topics.uniform())
    }

    fn station(&self, id: &str) -> Option<&Station> {
        self.station_pos.get(id).map(|&i| &self.stations[i])
    }

    fn point_view(&self, station_id: &str, timestamp: i64) -> PointView {
        let (lon, lat) = self.station(station_id).map_or((0.0, 0.0), |s| (s.lon, s.lat));
        PointView {
            station_id: station_id.to_string(),
            timestamp,
            lon,
            lat,
            topics: self.region_topics(station_id),
        }
    }

    fn hit(&self, scored: ScoredPoi) -> PoiHit {
        let poi = self.pois.get(&scored.poi_id);
        PoiHit {
            name: poi.map(|p| p.name.clone()).unwrap_or_default(),
            category: poi.map(|p| p.category.clone()).unwrap_or_default(),
            lon: poi.map_or(0.0, |p| p.lon),
            lat: poi.map_or(0.0, |p| p.lat),
            scored,
        }
    }

    /// Parses the sentence, ranks POIs per group and retrieves trajectories.
    pub fn query(&self, request: &QueryRequest) -> Result<QueryResponse, EngineError> {
        let started = Instant::now();
        let base = QueryDefaults::default();
        let defaults = QueryDefaults {
            alpha: request.alpha.unwrap_or(base.alpha),
            beta: request.beta.unwrap_or(base.beta),
            k: request.k.unwrap_or(base.k),
            topic_weights: request.topic_weights.clone().unwrap_or_default(),
        };
        for (name, v) in [("alpha", defaults.alpha), ("beta", defaults.beta)] {
            if !v.is_finite() {
                return Err(EngineError::BadParameter(format!("{name} must be finite")));
            }
        }
        if defaults.k == 0 {
            return Err(EngineError::BadParameter("k must be at least 1".into()));
        }
        if !defaults.topic_weights.is_empty() && defaults.topic_weights.len() != self.topics.topics {
            return Err(EngineError::TopicWeightLength {
                expected: self.topics.topics,
                got: defaults.topic_weights.len(),
            });
        }
        let overrides = request.word_overrides.clone().unwrap_or_default();
        let constraints = extract_constraints(&request.sentence, &self.dictionaries, &defaults, &overrides)?;
        let lookup = |region: &str| Some(self.region_topics(region));
        let groups = top_k_pois(&constraints, self.embeddings.as_ref(), &lookup, &self.corpus, &self.augment)?;
        let ranked = self.index.query(&constraints, &groups)?;
        let total = ranked.len();
        let max_results = request.max_results.unwrap_or(DEFAULT_MAX_RESULTS);
        let trajectories = ranked
            .into_iter()
            .take(max_results)
            .map(|t| {
                let points = self
                    .index
                    .trajectory(&t.trajectory_id)
                    .map(|tr| tr.points.iter().map(|p| self.point_view(&p.station_id, p.timestamp)).collect())
                    .unwrap_or_default();
                TrajectoryHit {
                    trajectory_id: t.trajectory_id,
                    relevance: t.relevance,
                    matched: t.matched,
                    points,
                }
            })
            .collect();
        let groups = constraints
            .groups
            .iter()
            .zip(groups)
            .map(|(g, found)| GroupResult {
                keywords: g.keywords.clone(),
                order_index: g.order_index,
                augmented: found.keywords,
                pois: found.pois.into_iter().map(|p| self.hit(p)).collect(),
            })
            .collect();
        Ok(QueryResponse {
            constraints,
            groups,
            total,
            trajectories,
            timing_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    }

    /// Plain BM25 POI search over free text.
    pub fn search_pois(&self, text: &str, k: usize) -> Vec<PoiHit> {
        let keywords: Vec<WeightedKeyword> = tokenize(text).iter().map(|w| WeightedKeyword::original(w)).collect();
        let mut unique: Vec<WeightedKeyword> = Vec::new();
        for kw in keywords {
            if !unique.iter().any(|u| u.word == kw.word) {
                unique.push(kw);
            }
        }
        self.corpus
            .top_k(&unique, &|_| None, &[], 1.0, 0.0, k)
            .into_iter()
            .map(|p| self.hit(p))
            .collect()
    }

    fn polygons(&self) -> &HashMap<String, Vec<[f64; 2]>> {
        self.polygons.get_or_init(|| {
            let projection = Projection::for_stations(&self.stations);
            let pts: Vec<(f64, f64)> = self.stations.iter().map(|s| projection.apply(s.lon, s.lat)).collect();
            let bbox = BBox::around(pts, 2000.0);
            let (lon0, lat0) = projection.origin;
            let r = crate::psr::EARTH_RADIUS_M;
            let unproject = |[x, y]: [f64; 2]| {
                [
                    lon0 + (x / (r * lat0.to_radians().cos())).to_degrees(),
                    lat0 + (y / r).to_degrees(),
                ]
            };
            voronoi_polygons(&self.stations, &projection, bbox)
                .map(|polys| {
                    polys
                        .into_iter()
                        .map(|p| (p.station_id, p.vertices.into_iter().map(unproject).collect()))
                        .collect()
                })
                .unwrap_or_default()
        })
    }

    pub fn region(&self, station_id: &str) -> Result<RegionView, EngineError> {
        let s = self
            .station(station_id)
            .ok_or_else(|| EngineError::UnknownRegion(station_id.to_string()))?;
        Ok(RegionView {
            station_id: s.id.clone(),
            lon: s.lon,
            lat: s.lat,
            topics: self.region_topics(&s.id),
            poi_count: self.region_poi_count.get(&s.id).copied().unwrap_or(0),
            polygon: self.polygons().get(&s.id).cloned().unwrap_or_default(),
        })
    }

    fn trajectory_or_err(&self, id: &str) -> Result<Trajectory, EngineError> {
        self.index
            .trajectory(id)
            .ok_or_else(|| EngineError::UnknownTrajectory(id.to_string()))
    }

    pub fn trajectory(&self, id: &str) -> Result<TrajectoryView, EngineError> {
        let t = self.trajectory_or_err(id)?;
        Ok(TrajectoryView {
            trajectory_id: t.id.clone(),
            user_id: t.user_id.clone(),
            points: t.points.iter().map(|p| self.point_view(&p.station_id, p.timestamp)).collect(),
            stopovers: stopovers(&t),
        })
    }

    /// Topic-sequence distance between two indexed trajectories.
    pub fn similar(&self, id_a: &str, id_b: &str, weights: MatchWeights, ordered: bool) -> Result<MatchResult, EngineError> {
        let seq = |id: &str| -> Result<Vec<Vec<f64>>, EngineError> {
            Ok(self
                .trajectory_or_err(id)?
                .points
                .iter()
                .map(|p| self.region_topics(&p.station_id))
                .collect())
        };
        let (a, b) = (seq(id_a)?, seq(id_b)?);
        Ok(if ordered {
            distance_ordered(&a, &b, weights)?
        } else {
            distance_unordered(&a, &b, weights)?
        })
    }

    pub fn topic_views(&self, top_n: usize) -> Vec<TopicView> {
        (0..self.topics.topics)
            .map(|t| TopicView {
                index: t,
                label: self.topics.topic_labels.get(t).cloned().unwrap_or_default(),
                top_words: self.topics.top_words(t, top_n),
            })
            .collect()
    }

    /// K-means over home/work topic features of every indexed trajectory.
    pub fn cluster(&self, k: usize, seed: u64, max_iters: usize) -> Result<ClusterReport, EngineError> {
        let hours = HomeWorkHours::default();
        let mut members = Vec::new();
        let mut features = Vec::new();
        for id in self.index.trajectory_ids() {
            let t = self.trajectory_or_err(id)?;
            let hw = extract_home_work(&t, &self.topics, &hours);
            features.push(hw.feature);
            members.push(ClusterMember {
                trajectory_id: id.clone(),
                home: hw.home,
                work: hw.work,
                cluster: 0,
            });
        }
        let km = kmeans(&features, k, seed, max_iters)?;
        for (m, c) in members.iter_mut().zip(&km.assignments) {
            m.cluster = *c;
        }
        Ok(ClusterReport {
            members,
            centroids: km.centroids,
            objective: km.objective,
        })
    }
}

