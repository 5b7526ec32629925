//! Trajectory documentation: turn trajectories, regions and POIs into text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{seconds_of_day, Poi, Station, Trajectory};
use crate::nlq::Dictionaries;
use crate::psr::RegionAssignment;

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Single-token form of a POI category: `"Train Station"` -> `"train_station"`.
pub fn category_token(category: &str) -> String {
    let parts = tokenize(category);
    if parts.is_empty() {
        "unknown".to_string()
    } else {
        parts.join("_")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEntry {
    pub timestamp: i64,
    pub time_word: String,
    pub station_id: String,
    pub lon: f64,
    pub lat: f64,
    pub poi_ids: Arc<[String]>,
    pub poi_names: Arc<[Vec<String>]>,
    pub poi_categories: Arc<[String]>,
}

impl DocEntry {
    /// Index keys carried by this entry: station id, POI name tokens,
    /// POI category tokens and the time word.
    pub fn keywords(&self) -> BTreeSet<&str> {
        let mut keys = BTreeSet::new();
        keys.insert(self.station_id.as_str());
        for name in self.poi_names.iter() {
            keys.extend(name.iter().map(String::as_str));
        }
        keys.extend(self.poi_categories.iter().map(String::as_str));
        if !self.time_word.is_empty() {
            keys.insert(self.time_word.as_str());
        }
        keys
    }

    pub fn has_keyword(&self, key: &str) -> bool {
        self.station_id == key
            || (!self.time_word.is_empty() && self.time_word == key)
            || self.poi_categories.iter().any(|c| c == key)
            || self.poi_names.iter().flatten().any(|t| t == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDocument {
    pub trajectory_id: String,
    pub entries: Vec<DocEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDocument {
    pub region_id: String,
    pub words: Vec<String>,
}

impl RegionDocument {
    pub fn word_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for w in &self.words {
            *counts.entry(w.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiDocument {
    pub poi_id: String,
    pub tokens: Vec<String>,
}

impl PoiDocument {
    pub fn from_poi(poi: &Poi) -> PoiDocument {
        let mut tokens = tokenize(&poi.name);
        tokens.extend(tokenize(&poi.category));
        tokens.extend(tokenize(&poi.description));
        PoiDocument {
            poi_id: poi.id.clone(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn term_count(&self, term: &str) -> usize {
        self.tokens.iter().filter(|t| *t == term).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Documents {
    pub trajectories: Vec<TrajectoryDocument>,
    pub regions: Vec<RegionDocument>,
    pub pois: Vec<PoiDocument>,
}

/// Textual context of one station's region, shared by every point there.
struct RegionText<'a> {
    station: &'a Station,
    poi_ids: Arc<[String]>,
    names: Arc<[Vec<String>]>,
    categories: Arc<[String]>,
}

pub fn build_documents(
    trajectories: &[Trajectory],
    stations: &[Station],
    assignment: &RegionAssignment,
    pois: &[Poi],
    dictionaries: &Dictionaries,
) -> Documents {
    let poi_by_id: HashMap<&str, &Poi> = pois.iter().map(|p| (p.id.as_str(), p)).collect();
    let regions_text: HashMap<&str, RegionText> = stations
        .iter()
        .map(|s| {
            let poi_ids: Arc<[String]> = assignment.pois_in(&s.id).into();
            let (names, categories): (Vec<_>, Vec<_>) = poi_ids
                .iter()
                .filter_map(|id| poi_by_id.get(id.as_str()))
                .map(|p| (tokenize(&p.name), category_token(&p.category)))
                .unzip();
            (
                s.id.as_str(),
                RegionText {
                    station: s,
                    poi_ids,
                    names: names.into(),
                    categories: categories.into(),
                },
            )
        })
        .collect();

    let trajectory_docs = trajectories
        .iter()
        .map(|t| TrajectoryDocument {
            trajectory_id: t.id.clone(),
            entries: t
                .points
                .iter()
                .map(|p| {
                    let time_word = dictionaries
                        .time_word(seconds_of_day(p.timestamp))
                        .unwrap_or_default()
                        .to_string();
                    match regions_text.get(p.station_id.as_str()) {
                        Some(r) => DocEntry {
                            timestamp: p.timestamp,
                            time_word,
                            station_id: p.station_id.clone(),
                            lon: r.station.lon,
                            lat: r.station.lat,
                            poi_ids: r.poi_ids.clone(),
                            poi_names: r.names.clone(),
                            poi_categories: r.categories.clone(),
                        },
                        None => DocEntry {
                            timestamp: p.timestamp,
                            time_word,
                            station_id: p.station_id.clone(),
                            lon: 0.0,
                            lat: 0.0,
                            poi_ids: Arc::from([]),
                            poi_names: Arc::from([]),
                            poi_categories: Arc::from([]),
                        },
                    }
                })
                .collect(),
        })
        .collect();

    let region_docs = stations
        .iter()
        .map(|s| RegionDocument {
            region_id: s.id.clone(),
            words: regions_text[s.id.as_str()].categories.to_vec(),
        })
        .collect();

    let mut poi_docs: Vec<PoiDocument> = pois.iter().map(PoiDocument::from_poi).collect();
    poi_docs.sort_by(|a, b| a.poi_id.cmp(&b.poi_id));

    Documents {
        trajectories: trajectory_docs,
        regions: region_docs,
        pois: poi_docs,
    }
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(r: R) -> std::io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}
