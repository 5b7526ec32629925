//! Temporal-textual-trajectory index.
//!
//! Time is cut into uniform partitions of `window_size` seconds. Each
//! partition owns an inverted map keyword -> sorted trajectory numbers and a
//! contiguous block of the trajectory-document entries whose timestamps fall
//! inside it. Partition lookup is a binary search over partition starts.
//!
//! On disk (`dir/`):
//! - `meta.json`: `{"window_size":..,"partition_starts":[..]}`
//! - `p<k>.postings`: `keyword<TAB>id1,id2,...` lines sorted by keyword
//! - `p<k>.docs.jsonl`: one `{"trajectory_id","first_point","entries"}` per line

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::docgen::{DocEntry, TrajectoryDocument};
use crate::model::{TimeWindow, Trajectory, TrajectoryPoint};
use crate::nlq::{Combinator, QueryConstraints, TemporalConstraint};
use crate::relevance::GroupPois;

pub const DEFAULT_WINDOW_SIZE: i64 = 600;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("no trajectory entries to index")]
    EmptyCorpus,
    #[error("window size must be positive, got {0}")]
    BadWindowSize(i64),
    #[error("{groups} POI groups for {constraints} spatial groups")]
    GroupCountMismatch { groups: usize, constraints: usize },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl IndexError {
    pub fn name(&self) -> &'static str {
        match self {
            IndexError::EmptyCorpus => "EmptyCorpus",
            IndexError::BadWindowSize(_) => "BadWindowSize",
            IndexError::GroupCountMismatch { .. } => "GroupCountMismatch",
            IndexError::Corrupt(_) => "Corrupt",
            IndexError::Io(_) => "Io",
        }
    }
}

/// Textual context of one station's region, shared by all entries there.
#[derive(Debug, Clone)]
struct RegionContext {
    station_id: String,
    lon: f64,
    lat: f64,
    poi_ids: Arc<[String]>,
    poi_names: Arc<[Vec<String>]>,
    poi_categories: Arc<[String]>,
    /// Sorted, deduplicated name and category tokens.
    keywords: Vec<String>,
}

impl RegionContext {
    fn from_entry(e: &DocEntry) -> Self {
        let mut keywords: Vec<String> = e
            .poi_names
            .iter()
            .flatten()
            .chain(e.poi_categories.iter())
            .cloned()
            .collect();
        keywords.sort();
        keywords.dedup();
        RegionContext {
            station_id: e.station_id.clone(),
            lon: e.lon,
            lat: e.lat,
            poi_ids: e.poi_ids.clone(),
            poi_names: e.poi_names.clone(),
            poi_categories: e.poi_categories.clone(),
            keywords,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CompactEntry {
    timestamp: i64,
    station: u32,
    /// Index into `time_words`, or `u32::MAX` for none.
    time_word: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DocSlice {
    traj: u32,
    first_point: u32,
    entries: Vec<CompactEntry>,
}

#[derive(Debug, Clone, Default)]
struct Partition {
    start: i64,
    postings: HashMap<String, Vec<u32>>,
    /// Sorted by `traj`.
    docs: Vec<DocSlice>,
}

impl Partition {
    fn slice(&self, traj: u32) -> Option<&DocSlice> {
        self.docs
            .binary_search_by_key(&traj, |d| d.traj)
            .ok()
            .map(|i| &self.docs[i])
    }
}

#[derive(Debug, Clone)]
pub struct TemporalTextualIndex {
    window_size: i64,
    trajectory_ids: Vec<String>,
    regions: Vec<RegionContext>,
    station_lookup: HashMap<String, u32>,
    time_words: Vec<String>,
    partitions: Vec<Partition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPoint {
    pub point_index: usize,
    pub poi_id: String,
    pub station_id: String,
    pub timestamp: i64,
    pub poi_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    pub trajectory_id: String,
    pub relevance: f64,
    /// Per spatial group, the points that satisfy it.
    pub matched: Vec<Vec<MatchedPoint>>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    window_size: i64,
    partition_starts: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct DiskSlice {
    trajectory_id: String,
    first_point: u32,
    entries: Vec<DocEntry>,
}

/// Contiguous range of partitions (of uniform width `window_size`, sorted
/// `starts`) that intersect `window`.
///
/// Binary search for the first partition ending after `window.start`, then
/// one more probe to bound the far end. `probe` sees every partition index
/// whose start is compared against the window.
pub fn partition_range(
    starts: &[i64],
    window_size: i64,
    window: &TimeWindow,
    probe: &mut dyn FnMut(usize),
) -> Range<usize> {
    search(starts.len(), |k| starts[k], window_size, window, probe)
}

fn search(
    p: usize,
    start_of: impl Fn(usize) -> i64,
    window_size: i64,
    window: &TimeWindow,
    probe: &mut dyn FnMut(usize),
) -> Range<usize> {
    let (mut lo, mut hi) = (0, p);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        probe(mid);
        if i128::from(start_of(mid)) + i128::from(window_size) > i128::from(window.start) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == p {
        return p..p;
    }
    probe(lo);
    let first = start_of(lo);
    if first >= window.end {
        return lo..lo;
    }
    let span = i128::from(window.end) - i128::from(first);
    let count = (span + i128::from(window_size) - 1) / i128::from(window_size);
    let end = (lo as i128 + count).min(p as i128) as usize;
    lo..end
}

impl TemporalTextualIndex {
    /// Entries at the same station are expected to carry that station's
    /// region POIs; the first one seen is kept for the whole index.
    pub fn build(docs: &[TrajectoryDocument], window_size: i64) -> Result<Self, IndexError> {
        if window_size <= 0 {
            return Err(IndexError::BadWindowSize(window_size));
        }
        let mut order: Vec<&TrajectoryDocument> = docs.iter().filter(|d| !d.entries.is_empty()).collect();
        if order.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        order.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
        order.dedup_by(|a, b| a.trajectory_id == b.trajectory_id);

        let mut builder = Builder::new(window_size);
        let (min_ts, max_ts) = order
            .iter()
            .flat_map(|d| d.entries.iter().map(|e| e.timestamp))
            .fold((i64::MAX, i64::MIN), |(lo, hi), t| (lo.min(t), hi.max(t)));
        builder.init_partitions(min_ts, max_ts);
        for (traj, doc) in order.iter().enumerate() {
            builder.trajectory_ids.push(doc.trajectory_id.clone());
            builder.add_document(traj as u32, &doc.entries, 0);
        }
        Ok(builder.finish())
    }

    pub fn window_size(&self) -> i64 {
        self.window_size
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition_starts(&self) -> Vec<i64> {
        self.partitions.iter().map(|p| p.start).collect()
    }

    pub fn trajectory_ids(&self) -> &[String] {
        &self.trajectory_ids
    }

    /// `[first partition start, last partition end)`.
    pub fn span(&self) -> TimeWindow {
        let first = self.partitions[0].start;
        let last = self.partitions[self.partitions.len() - 1].start;
        TimeWindow {
            start: first,
            end: last + self.window_size,
        }
    }

    pub fn lookup_partitions(&self, window: &TimeWindow) -> Range<usize> {
        self.lookup_partitions_probed(window, &mut |_| {})
    }

    pub fn lookup_partitions_probed(&self, window: &TimeWindow, probe: &mut dyn FnMut(usize)) -> Range<usize> {
        search(self.partitions.len(), |k| self.partitions[k].start, self.window_size, window, probe)
    }

    fn range_for(&self, window: &TimeWindow) -> Range<usize> {
        self.lookup_partitions_probed(window, &mut |_| {})
    }

    /// Sorted trajectory ids listed under `keyword` in partition `k`.
    pub fn postings(&self, k: usize, keyword: &str) -> Vec<&str> {
        self.partitions
            .get(k)
            .and_then(|p| p.postings.get(keyword))
            .map(|ids| ids.iter().map(|&t| self.trajectory_ids[t as usize].as_str()).collect())
            .unwrap_or_default()
    }

    fn entry_has(&self, e: &CompactEntry, key: &str) -> bool {
        let region = &self.regions[e.station as usize];
        region.station_id == key
            || (e.time_word != u32::MAX && self.time_words[e.time_word as usize] == key)
            || region.keywords.binary_search_by(|k| k.as_str().cmp(key)).is_ok()
    }

    /// Trajectories with at least one point inside `windows` whose entry
    /// carries any of `keys` (station ids or document keywords).
    pub fn retrieve(&self, keys: &[&str], windows: &[TimeWindow]) -> BTreeSet<String> {
        self.retrieve_where(keys, windows, &|_| true)
    }

    /// As [`retrieve`](Self::retrieve) with day-part restrictions applied.
    pub fn retrieve_temporal(&self, keys: &[&str], temporal: &TemporalConstraint) -> BTreeSet<String> {
        let windows = temporal.concrete_windows(self.span());
        self.retrieve_where(keys, &windows, &|ts| temporal.admits(ts))
    }

    fn retrieve_where(&self, keys: &[&str], windows: &[TimeWindow], admit: &dyn Fn(i64) -> bool) -> BTreeSet<String> {
        let mut hits: BTreeSet<u32> = BTreeSet::new();
        for w in windows {
            for k in self.range_for(w) {
                let part = &self.partitions[k];
                for key in keys {
                    let Some(list) = part.postings.get(*key) else { continue };
                    for &traj in list {
                        if hits.contains(&traj) {
                            continue;
                        }
                        let slice = part.slice(traj).expect("posting implies a document slice");
                        if slice
                            .entries
                            .iter()
                            .any(|e| w.contains(e.timestamp) && admit(e.timestamp) && self.entry_has(e, key))
                        {
                            hits.insert(traj);
                        }
                    }
                }
            }
        }
        hits.into_iter().map(|t| self.trajectory_ids[t as usize].clone()).collect()
    }

    /// Joins per-group POI selections into ranked trajectories.
    ///
    /// Each group matches trajectories with a point (inside the temporal
    /// constraint) in the region of one of the group's POIs; a group with no
    /// POIs matches nothing. `And` intersects
    /// groups, `Or` unions them. Differing `order_index` values additionally
    /// require a time-ordered witness: every group of a lower index matched
    /// strictly earlier than every group of a higher one (ordering implies
    /// conjunction). Relevance is the sum over groups of the best matched POI
    /// score, divided by the maximum over the results.
    pub fn query(&self, constraints: &QueryConstraints, groups: &[GroupPois]) -> Result<Vec<ScoredTrajectory>, IndexError> {
        if groups.len() != constraints.groups.len() {
            return Err(IndexError::GroupCountMismatch {
                groups: groups.len(),
                constraints: constraints.groups.len(),
            });
        }
        let temporal = constraints.temporal();
        let windows = temporal.concrete_windows(self.span());

        // Per group: trajectory -> matched points.
        let mut per_group: Vec<BTreeMap<u32, Vec<MatchedPoint>>> = Vec::with_capacity(groups.len());
        for g in groups {
            let mut best: HashMap<u32, (&str, f64)> = HashMap::new();
            for poi in &g.pois {
                let Some(&station) = self.station_lookup.get(&poi.region_id) else { continue };
                let slot = best.entry(station).or_insert((poi.poi_id.as_str(), poi.score));
                if poi.score > slot.1 || (poi.score == slot.1 && poi.poi_id.as_str() < slot.0) {
                    *slot = (poi.poi_id.as_str(), poi.score);
                }
            }
            let mut matches: BTreeMap<u32, Vec<MatchedPoint>> = BTreeMap::new();
            for w in &windows {
                for k in self.range_for(w) {
                    let part = &self.partitions[k];
                    let mut trajs: BTreeSet<u32> = BTreeSet::new();
                    for &station in best.keys() {
                        if let Some(list) = part.postings.get(&self.regions[station as usize].station_id) {
                            trajs.extend(list);
                        }
                    }
                    for traj in trajs {
                        let slice = part.slice(traj).expect("posting implies a document slice");
                        for (off, e) in slice.entries.iter().enumerate() {
                            if !w.contains(e.timestamp) || !temporal.admits(e.timestamp) {
                                continue;
                            }
                            if let Some(&(poi_id, score)) = best.get(&e.station) {
                                matches.entry(traj).or_default().push(MatchedPoint {
                                    point_index: slice.first_point as usize + off,
                                    poi_id: poi_id.to_string(),
                                    station_id: self.regions[e.station as usize].station_id.clone(),
                                    timestamp: e.timestamp,
                                    poi_score: score,
                                });
                            }
                        }
                    }
                }
            }
            for pts in matches.values_mut() {
                pts.sort_by_key(|m| m.point_index);
                pts.dedup_by_key(|m| m.point_index);
            }
            per_group.push(matches);
        }

        let ordered = constraints.is_ordered();
        let candidates: BTreeSet<u32> = if ordered || constraints.combinator == Combinator::And {
            let mut it = per_group.iter();
            let first: BTreeSet<u32> = it.next().map(|m| m.keys().copied().collect()).unwrap_or_default();
            it.fold(first, |acc, m| acc.into_iter().filter(|t| m.contains_key(t)).collect())
        } else {
            per_group.iter().flat_map(|m| m.keys().copied()).collect()
        };

        let levels: Vec<usize> = constraints.groups.iter().map(|g| g.order_index).collect();
        let mut results: Vec<ScoredTrajectory> = Vec::new();
        for traj in candidates {
            let mut matched: Vec<Vec<MatchedPoint>> = per_group
                .iter()
                .map(|m| m.get(&traj).cloned().unwrap_or_default())
                .collect();
            if ordered && !restrict_to_ordered(&mut matched, &levels) {
                continue;
            }
            let raw: f64 = matched
                .iter()
                .map(|pts| pts.iter().map(|m| m.poi_score).fold(f64::NEG_INFINITY, f64::max))
                .filter(|s| s.is_finite())
                .sum();
            results.push(ScoredTrajectory {
                trajectory_id: self.trajectory_ids[traj as usize].clone(),
                relevance: raw,
                matched,
            });
        }
        let max = results.iter().map(|r| r.relevance).fold(f64::NEG_INFINITY, f64::max);
        for r in &mut results {
            r.relevance = if max > 0.0 { (r.relevance / max).clamp(0.0, 1.0) } else { 1.0 };
        }
        results.sort_by(|a, b| {
            b.relevance
                .total_cmp(&a.relevance)
                .then_with(|| a.trajectory_id.cmp(&b.trajectory_id))
        });
        Ok(results)
    }

    /// Reassembles a trajectory's points from the partition blocks.
    pub fn trajectory(&self, id: &str) -> Option<Trajectory> {
        let traj = self.trajectory_ids.binary_search_by(|t| t.as_str().cmp(id)).ok()? as u32;
        let mut points = Vec::new();
        for part in &self.partitions {
            if let Some(slice) = part.slice(traj) {
                points.extend(slice.entries.iter().map(|e| TrajectoryPoint {
                    station_id: self.regions[e.station as usize].station_id.clone(),
                    timestamp: e.timestamp,
                }));
            }
        }
        Some(Trajectory {
            id: id.to_string(),
            user_id: id.split('@').next().unwrap_or(id).to_string(),
            points,
        })
    }

    /// Station coordinates as recorded in the documents.
    pub fn station_position(&self, station_id: &str) -> Option<(f64, f64)> {
        self.station_lookup.get(station_id).map(|&i| {
            let r = &self.regions[i as usize];
            (r.lon, r.lat)
        })
    }

    fn expand(&self, e: &CompactEntry) -> DocEntry {
        let r = &self.regions[e.station as usize];
        DocEntry {
            timestamp: e.timestamp,
            time_word: if e.time_word == u32::MAX {
                String::new()
            } else {
                self.time_words[e.time_word as usize].clone()
            },
            station_id: r.station_id.clone(),
            lon: r.lon,
            lat: r.lat,
            poi_ids: r.poi_ids.clone(),
            poi_names: r.poi_names.clone(),
            poi_categories: r.poi_categories.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        fs::create_dir_all(dir)?;
        // Stale partitions from a previous, larger build must not survive.
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with('p') && (name.ends_with(".postings") || name.ends_with(".docs.jsonl")) {
                fs::remove_file(&path)?;
            }
        }
        let meta = Meta {
            window_size: self.window_size,
            partition_starts: self.partition_starts(),
        };
        fs::write(dir.join("meta.json"), serde_json::to_vec(&meta).map_err(|e| IndexError::Corrupt(e.to_string()))?)?;
        for (k, part) in self.partitions.iter().enumerate() {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("p{k}.postings")))?);
            let sorted: BTreeMap<&String, &Vec<u32>> = part.postings.iter().collect();
            for (kw, ids) in sorted {
                let ids: Vec<&str> = ids.iter().map(|&t| self.trajectory_ids[t as usize].as_str()).collect();
                writeln!(w, "{kw}\t{}", ids.join(","))?;
            }
            w.flush()?;
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("p{k}.docs.jsonl")))?);
            for slice in &part.docs {
                let disk = DiskSlice {
                    trajectory_id: self.trajectory_ids[slice.traj as usize].clone(),
                    first_point: slice.first_point,
                    entries: slice.entries.iter().map(|e| self.expand(e)).collect(),
                };
                serde_json::to_writer(&mut w, &disk).map_err(|e| IndexError::Corrupt(e.to_string()))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let meta: Meta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)
            .map_err(|e| IndexError::Corrupt(format!("meta.json: {e}")))?;
        if meta.window_size <= 0 {
            return Err(IndexError::BadWindowSize(meta.window_size));
        }
        if meta.partition_starts.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        if meta.partition_starts.windows(2).any(|w| w[1] - w[0] != meta.window_size) {
            return Err(IndexError::Corrupt("partition starts are not uniformly spaced".into()));
        }

        // First pass: trajectory ids, so numbering matches the build.
        let mut slices: Vec<Vec<DiskSlice>> = Vec::with_capacity(meta.partition_starts.len());
        let mut ids: BTreeSet<String> = BTreeSet::new();
        for k in 0..meta.partition_starts.len() {
            let file = BufReader::new(fs::File::open(dir.join(format!("p{k}.docs.jsonl")))?);
            let mut part = Vec::new();
            for (n, line) in file.lines().enumerate() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let s: DiskSlice = serde_json::from_str(&line)
                    .map_err(|e| IndexError::Corrupt(format!("p{k}.docs.jsonl:{}: {e}", n + 1)))?;
                ids.insert(s.trajectory_id.clone());
                part.push(s);
            }
            slices.push(part);
        }
        let mut builder = Builder::new(meta.window_size);
        builder.trajectory_ids = ids.into_iter().collect();
        builder.partitions = meta
            .partition_starts
            .iter()
            .map(|&start| Partition {
                start,
                ..Partition::default()
            })
            .collect();
        let number: HashMap<String, u32> = builder
            .trajectory_ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for part in slices {
            for s in part {
                builder.add_document(number[&s.trajectory_id], &s.entries, s.first_point);
            }
        }
        let index = builder.finish();

        // Postings files must agree with what the documents imply.
        for k in 0..index.partitions.len() {
            let file = BufReader::new(fs::File::open(dir.join(format!("p{k}.postings")))?);
            let mut listed = 0usize;
            for line in file.lines() {
                let line = line?;
                let (kw, ids) = line
                    .split_once('\t')
                    .ok_or_else(|| IndexError::Corrupt(format!("p{k}.postings: missing tab")))?;
                let want: Vec<&str> = ids.split(',').filter(|s| !s.is_empty()).collect();
                if index.postings(k, kw) != want {
                    return Err(IndexError::Corrupt(format!("p{k}.postings: keyword {kw:?} disagrees with documents")));
                }
                listed += 1;
            }
            if listed != index.partitions[k].postings.len() {
                return Err(IndexError::Corrupt(format!("p{k}.postings: keyword count mismatch")));
            }
        }
        Ok(index)
    }
}

/// Keeps only matched points lying on some time-ordered witness across
/// levels. Returns `false` when no witness exists.
fn restrict_to_ordered(matched: &mut [Vec<MatchedPoint>], levels: &[usize]) -> bool {
    let mut distinct: Vec<usize> = levels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let groups_at = |lvl: usize| (0..levels.len()).filter(move |&g| levels[g] == lvl);

    // Earliest achievable end of each level, going forward.
    let mut forward: Vec<i64> = Vec::with_capacity(distinct.len());
    let mut bound = i64::MIN;
    for &lvl in &distinct {
        let mut end = i64::MIN;
        for g in groups_at(lvl) {
            match matched[g].iter().map(|m| m.timestamp).filter(|&t| t > bound).min() {
                Some(t) => end = end.max(t),
                None => return false,
            }
        }
        forward.push(end);
        bound = end;
    }
    // Latest achievable start of each level, going backward.
    let mut backward: Vec<i64> = vec![i64::MAX; distinct.len()];
    let mut bound = i64::MAX;
    for (li, &lvl) in distinct.iter().enumerate().rev() {
        let mut start = i64::MAX;
        for g in groups_at(lvl) {
            let t = matched[g]
                .iter()
                .map(|m| m.timestamp)
                .filter(|&t| t < bound)
                .max()
                .expect("forward pass proved feasibility");
            start = start.min(t);
        }
        backward[li] = start;
        bound = start;
    }
    for (li, &lvl) in distinct.iter().enumerate() {
        let after = if li == 0 { i64::MIN } else { forward[li - 1] };
        let before = if li + 1 == distinct.len() { i64::MAX } else { backward[li + 1] };
        for g in groups_at(lvl) {
            matched[g].retain(|m| (li == 0 || m.timestamp > after) && (li + 1 == distinct.len() || m.timestamp < before));
        }
    }
    true
}

struct Builder {
    window_size: i64,
    trajectory_ids: Vec<String>,
    regions: Vec<RegionContext>,
    station_lookup: HashMap<String, u32>,
    time_words: Vec<String>,
    time_lookup: HashMap<String, u32>,
    partitions: Vec<Partition>,
}

impl Builder {
    fn new(window_size: i64) -> Self {
        Builder {
            window_size,
            trajectory_ids: Vec::new(),
            regions: Vec::new(),
            station_lookup: HashMap::new(),
            time_words: Vec::new(),
            time_lookup: HashMap::new(),
            partitions: Vec::new(),
        }
    }

    fn init_partitions(&mut self, min_ts: i64, max_ts: i64) {
        let first = min_ts.div_euclid(self.window_size);
        let last = max_ts.div_euclid(self.window_size);
        self.partitions = (first..=last)
            .map(|i| Partition {
                start: i * self.window_size,
                ..Partition::default()
            })
            .collect();
    }

    fn station(&mut self, e: &DocEntry) -> u32 {
        if let Some(&i) = self.station_lookup.get(&e.station_id) {
            return i;
        }
        let i = self.regions.len() as u32;
        self.regions.push(RegionContext::from_entry(e));
        self.station_lookup.insert(e.station_id.clone(), i);
        i
    }

    fn time_word(&mut self, word: &str) -> u32 {
        if word.is_empty() {
            return u32::MAX;
        }
        if let Some(&i) = self.time_lookup.get(word) {
            return i;
        }
        let i = self.time_words.len() as u32;
        self.time_words.push(word.to_string());
        self.time_lookup.insert(word.to_string(), i);
        i
    }

    /// Entries must be in timestamp order; `first_point` is the index of
    /// `entries[0]` within its trajectory.
    fn add_document(&mut self, traj: u32, entries: &[DocEntry], first_point: u32) {
        let first_start = self.partitions[0].start;
        let mut i = 0;
        while i < entries.len() {
            let k = ((entries[i].timestamp - first_start).div_euclid(self.window_size)) as usize;
            let part_end = self.partitions[k].start + self.window_size;
            let mut j = i;
            let mut compact = Vec::new();
            while j < entries.len() && entries[j].timestamp < part_end {
                let e = &entries[j];
                let station = self.station(e);
                let time_word = self.time_word(&e.time_word);
                compact.push(CompactEntry {
                    timestamp: e.timestamp,
                    station,
                    time_word,
                });
                j += 1;
            }
            let part = &mut self.partitions[k];
            for (e, c) in entries[i..j].iter().zip(&compact) {
                let region = &self.regions[c.station as usize];
                let mut push = |kw: &str| {
                    let list = part.postings.entry(kw.to_string()).or_default();
                    if list.last() != Some(&traj) {
                        list.push(traj);
                    }
                };
                push(&region.station_id);
                for kw in &region.keywords {
                    push(kw);
                }
                if !e.time_word.is_empty() {
                    push(&e.time_word);
                }
            }
            part.docs.push(DocSlice {
                traj,
                first_point: first_point + i as u32,
                entries: compact,
            });
            i = j;
        }
    }

    fn finish(mut self) -> TemporalTextualIndex {
        for part in &mut self.partitions {
            part.docs.sort_by_key(|d| d.traj);
            for list in part.postings.values_mut() {
                list.sort_unstable();
                list.dedup();
            }
        }
        TemporalTextualIndex {
            window_size: self.window_size,
            trajectory_ids: self.trajectory_ids,
            regions: self.regions,
            station_lookup: self.station_lookup,
            time_words: self.time_words,
            partitions: self.partitions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlq::SpatialGroup;
    use crate::relevance::ScoredPoi;

    fn entry(station: &str, ts: i64, names: &[&str]) -> DocEntry {
        DocEntry {
            timestamp: ts,
            time_word: String::new(),
            station_id: station.into(),
            lon: 120.0,
            lat: 28.0,
            poi_ids: names.iter().map(|n| format!("poi_{n}")).collect(),
            poi_names: names.iter().map(|n| vec![n.to_string()]).collect(),
            poi_categories: names.iter().map(|_| "shop".to_string()).collect(),
        }
    }

    fn doc(id: &str, points: &[(&str, i64)]) -> TrajectoryDocument {
        TrajectoryDocument {
            trajectory_id: id.into(),
            entries: points.iter().map(|(s, t)| entry(s, *t, &[s])).collect(),
        }
    }

    fn constraints(groups: &[usize], combinator: Combinator) -> QueryConstraints {
        QueryConstraints {
            words: vec![],
            windows: vec![TimeWindow::UNBOUNDED],
            daily: vec![],
            groups: groups
                .iter()
                .map(|&o| SpatialGroup {
                    keywords: vec![],
                    order_index: o,
                })
                .collect(),
            combinator,
            topic_weights: vec![],
            alpha: 1.0,
            beta: 0.0,
            k: 10,
        }
    }

    fn group(station: &str, score: f64) -> GroupPois {
        GroupPois {
            keywords: vec![],
            pois: vec![ScoredPoi {
                poi_id: format!("poi_{station}"),
                region_id: station.into(),
                score,
                base_score: score,
                keyword_hits: vec![],
            }],
        }
    }

    fn ids(r: &[ScoredTrajectory]) -> Vec<&str> {
        r.iter().map(|t| t.trajectory_id.as_str()).collect()
    }

    #[test]
    fn lookup_examples() {
        let starts = [0, 600, 1200, 1800];
        let w = TimeWindow::new(650, 1300).unwrap();
        assert_eq!(partition_range(&starts, 600, &w, &mut |_| {}), 1..3);
        let before = TimeWindow::new(-1000, -10).unwrap();
        assert!(partition_range(&starts, 600, &before, &mut |_| {}).is_empty());
        let after = TimeWindow::new(5000, 6000).unwrap();
        assert!(partition_range(&starts, 600, &after, &mut |_| {}).is_empty());
        assert_eq!(partition_range(&starts, 600, &TimeWindow::UNBOUNDED, &mut |_| {}), 0..4);
        // Boundary: a window ending exactly at a partition start excludes it.
        let w = TimeWindow::new(0, 600).unwrap();
        assert_eq!(partition_range(&starts, 600, &w, &mut |_| {}), 0..1);
    }

    #[test]
    fn membership_per_window() {
        let idx = TemporalTextualIndex::build(&[doc("t1", &[("A", 100), ("B", 700)])], 600).unwrap();
        assert_eq!(idx.partition_count(), 2);
        assert_eq!(idx.postings(0, "t1"), Vec::<&str>::new());
        assert_eq!(idx.postings(0, "A"), vec!["t1"]);
        assert_eq!(idx.postings(1, "B"), vec!["t1"]);
        assert!(idx.postings(1, "A").is_empty());

        let idx = TemporalTextualIndex::build(&[doc("t1", &[("A", 100), ("B", 700)])], 10_000).unwrap();
        assert_eq!(idx.partition_count(), 1);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(TemporalTextualIndex::build(&[], 600), Err(IndexError::EmptyCorpus)));
        assert!(matches!(
            TemporalTextualIndex::build(&[doc("t", &[("A", 1)])], 0),
            Err(IndexError::BadWindowSize(0))
        ));
    }

    #[test]
    fn retrieve_refines_to_point_time() {
        let idx = TemporalTextualIndex::build(
            &[doc("t1", &[("A", 100), ("B", 700)]), doc("t2", &[("A", 500)])],
            600,
        )
        .unwrap();
        let w = TimeWindow::new(0, 200).unwrap();
        assert_eq!(idx.retrieve(&["A"], &[w]), BTreeSet::from(["t1".to_string()]));
        assert!(idx.retrieve(&["nowhere"], &[TimeWindow::UNBOUNDED]).is_empty());
        assert_eq!(idx.retrieve(&["A"], &[TimeWindow::UNBOUNDED]).len(), 2);
    }

    #[test]
    fn ordered_and_set_algebra() {
        let idx = TemporalTextualIndex::build(
            &[
                doc("ab", &[("A", 100), ("B", 200)]),
                doc("ba", &[("B", 100), ("A", 200)]),
                doc("a", &[("A", 100), ("C", 200)]),
            ],
            600,
        )
        .unwrap();
        let g = [group("A", 2.0), group("B", 1.0)];
        let before = idx.query(&constraints(&[0, 1], Combinator::And), &g).unwrap();
        assert_eq!(ids(&before), vec!["ab"]);
        let and = idx.query(&constraints(&[0, 0], Combinator::And), &g).unwrap();
        assert_eq!(ids(&and), vec!["ab", "ba"]);
        let or = idx.query(&constraints(&[0, 0], Combinator::Or), &g).unwrap();
        assert_eq!(ids(&or), vec!["ab", "ba", "a"]);
        assert_eq!(or[0].relevance, 1.0);
        assert!((or[2].relevance - 2.0 / 3.0).abs() < 1e-12);
        assert!(or.iter().all(|t| (0.0..=1.0).contains(&t.relevance)));

        let single = idx.query(&constraints(&[0], Combinator::And), &g[..1]).unwrap();
        assert_eq!(ids(&single), vec!["a", "ab", "ba"]);
        assert!(single.iter().all(|t| !t.matched[0].is_empty()));
    }

    #[test]
    fn ordered_keeps_only_witness_points() {
        let idx = TemporalTextualIndex::build(&[doc("t", &[("B", 50), ("A", 100), ("B", 200), ("A", 300)])], 600).unwrap();
        let r = idx
            .query(&constraints(&[0, 1], Combinator::And), &[group("A", 1.0), group("B", 1.0)])
            .unwrap();
        let a: Vec<usize> = r[0].matched[0].iter().map(|m| m.point_index).collect();
        let b: Vec<usize> = r[0].matched[1].iter().map(|m| m.point_index).collect();
        assert_eq!(a, vec![1]);
        assert_eq!(b, vec![2]);
    }

    #[test]
    fn save_load_round_trip() {
        let docs = [doc("t1", &[("A", 100), ("B", 700)]), doc("t2", &[("A", 1300)])];
        let idx = TemporalTextualIndex::build(&docs, 600).unwrap();
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let back = TemporalTextualIndex::load(dir.path()).unwrap();
        assert_eq!(back.partition_starts(), idx.partition_starts());
        assert_eq!(back.postings(2, "A"), vec!["t2"]);
        assert_eq!(back.trajectory("t1").unwrap().points.len(), 2);

        let other = tempfile::tempdir().unwrap();
        back.save(other.path()).unwrap();
        for k in 0..idx.partition_count() {
            for name in [format!("p{k}.postings"), format!("p{k}.docs.jsonl")] {
                assert_eq!(
                    fs::read(dir.path().join(&name)).unwrap(),
                    fs::read(other.path().join(&name)).unwrap()
                );
            }
        }
    }
}
