//! Domain entities, CSV ingestion, and trajectory assembly.
//!
//! Timestamps are naive local time stored as epoch seconds. No timezone
//! arithmetic is performed anywhere in the crate.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{file}:{line}: {reason}")]
    MalformedRow {
        file: String,
        line: u64,
        reason: String,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown station {0:?}")]
    UnknownStation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub fn name(&self) -> &'static str {
        match self {
            ModelError::MalformedRow { .. } => "MalformedRow",
            ModelError::DuplicateId(_) => "DuplicateId",
            ModelError::UnknownStation(_) => "UnknownStation",
            ModelError::Io { .. } => "Io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub name: String,
    pub category: String,
    #[serde(default)]
    pub description: String,
    pub lon: f64,
    pub lat: f64,
    /// Station whose region contains this POI; set by [`crate::psr::assign_regions`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_id: Option<String>,
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawRecord {
    pub user_id: String,
    pub station_id: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub station_id: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub user_id: String,
    pub points: Vec<TrajectoryPoint>,
}

/// Half-open time interval `[start, end)` in epoch seconds.
///
/// `i64::MIN` / `i64::MAX` act as the unbounded sentinels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
}

impl TimeWindow {
    pub const UNBOUNDED: TimeWindow = TimeWindow {
        start: i64::MIN,
        end: i64::MAX,
    };

    pub fn new(start: i64, end: i64) -> Option<Self> {
        (start < end).then_some(TimeWindow { start, end })
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn is_unbounded(&self) -> bool {
        self.start == i64::MIN && self.end == i64::MAX
    }

    pub fn intersect(&self, other: &TimeWindow) -> Option<TimeWindow> {
        TimeWindow::new(self.start.max(other.start), self.end.min(other.end))
    }

    /// Does `[a, b]` (closed) overlap this window?
    pub fn overlaps_closed(&self, a: i64, b: i64) -> bool {
        a < self.end && b >= self.start
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |t: i64, f: &mut fmt::Formatter<'_>| -> fmt::Result {
            match t {
                i64::MIN => write!(f, "-inf"),
                i64::MAX => write!(f, "+inf"),
                t => write!(f, "{}", format_timestamp(t)),
            }
        };
        write!(f, "[")?;
        show(self.start, f)?;
        write!(f, ", ")?;
        show(self.end, f)?;
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    PerUser,
    #[default]
    PerUserPerDay,
}

impl std::str::FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-user" => Ok(Grouping::PerUser),
            "per-user-per-day" => Ok(Grouping::PerUserPerDay),
            other => Err(format!("unknown grouping {other:?}")),
        }
    }
}

/// Parses `YYYY-MM-DDTHH:MM:SS` (naive) or integer epoch seconds.
pub fn parse_timestamp(text: &str) -> Option<i64> {
    let text = text.trim();
    if let Ok(epoch) = text.parse::<i64>() {
        return Some(epoch);
    }
    NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|dt| dt.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Epoch seconds of midnight starting `date`.
pub fn day_start(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp()
}

pub fn seconds_of_day(ts: i64) -> i64 {
    ts.rem_euclid(SECONDS_PER_DAY)
}

pub fn date_of(ts: i64) -> NaiveDate {
    DateTime::from_timestamp(ts.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY, 0)
        .expect("timestamp in chrono range")
        .date_naive()
}

#[derive(Debug, Deserialize)]
struct StationRow {
    id: String,
    lon: f64,
    lat: f64,
}

#[derive(Debug, Deserialize)]
struct PoiRow {
    id: String,
    name: String,
    category: String,
    #[serde(default)]
    description: Option<String>,
    lon: f64,
    lat: f64,
}

#[derive(Debug, Deserialize)]
struct RecordRow {
    user_id: String,
    station_id: String,
    timestamp: String,
}

fn open(path: &Path) -> Result<std::fs::File, ModelError> {
    std::fs::File::open(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_rows<T, R>(reader: R, file: &str) -> Result<Vec<(u64, T)>, ModelError>
where
    T: serde::de::DeserializeOwned,
    R: Read,
{
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let malformed = |line: u64, reason: String| ModelError::MalformedRow {
        file: file.to_string(),
        line,
        reason,
    };
    let headers = rdr
        .byte_headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let mut out = Vec::new();
    let mut record = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let row = record
                    .deserialize::<T>(Some(&headers))
                    .map_err(|e| malformed(line, e.to_string()))?;
                out.push((line, row));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(malformed(line, e.to_string()));
            }
        }
    }
    Ok(out)
}

fn check_coords(file: &str, line: u64, lon: f64, lat: f64) -> Result<(), ModelError> {
    if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return Err(ModelError::MalformedRow {
            file: file.to_string(),
            line,
            reason: format!("coordinates out of range: lon={lon}, lat={lat}"),
        });
    }
    Ok(())
}

pub fn read_stations<R: Read>(reader: R) -> Result<Vec<Station>, ModelError> {
    let mut seen = HashSet::new();
    let mut stations = Vec::new();
    for (line, row) in csv_rows::<StationRow, _>(reader, "stations.csv")? {
        check_coords("stations.csv", line, row.lon, row.lat)?;
        if !seen.insert(row.id.clone()) {
            return Err(ModelError::DuplicateId(row.id));
        }
        stations.push(Station {
            id: row.id,
            lon: row.lon,
            lat: row.lat,
        });
    }
    Ok(stations)
}

pub fn read_pois<R: Read>(reader: R) -> Result<Vec<Poi>, ModelError> {
    let mut seen = HashSet::new();
    let mut pois = Vec::new();
    for (line, row) in csv_rows::<PoiRow, _>(reader, "pois.csv")? {
        check_coords("pois.csv", line, row.lon, row.lat)?;
        if !seen.insert(row.id.clone()) {
            return Err(ModelError::DuplicateId(row.id));
        }
        pois.push(Poi {
            id: row.id,
            name: row.name,
            category: row.category,
            description: row.description.unwrap_or_default(),
            lon: row.lon,
            lat: row.lat,
            region_id: None,
        });
    }
    Ok(pois)
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<RawRecord>, ModelError> {
    csv_rows::<RecordRow, _>(reader, "records.csv")?
        .into_iter()
        .map(|(line, row)| {
            let timestamp =
                parse_timestamp(&row.timestamp).ok_or_else(|| ModelError::MalformedRow {
                    file: "records.csv".to_string(),
                    line,
                    reason: format!("unparsable timestamp {:?}", row.timestamp),
                })?;
            Ok(RawRecord {
                user_id: row.user_id,
                station_id: row.station_id,
                timestamp,
            })
        })
        .collect()
}

pub fn load_dataset(
    stations_path: &Path,
    pois_path: &Path,
    records_path: &Path,
) -> Result<(Vec<Station>, Vec<Poi>, Vec<RawRecord>), ModelError> {
    let stations = read_stations(open(stations_path)?)?;
    let pois = read_pois(open(pois_path)?)?;
    let records = read_records(open(records_path)?)?;
    Ok((stations, pois, records))
}

/// Groups records into trajectories, one per user (or per user and day).
///
/// Output is sorted by trajectory id; points within a trajectory are sorted
/// by `(timestamp, station_id)` with exact duplicates collapsed.
pub fn assemble_trajectories(
    records: &[RawRecord],
    stations: &[Station],
    grouping: Grouping,
) -> Result<Vec<Trajectory>, ModelError> {
    let known: HashSet<&str> = stations.iter().map(|s| s.id.as_str()).collect();
    let mut groups: BTreeMap<String, (String, Vec<TrajectoryPoint>)> = BTreeMap::new();
    for rec in records {
        if !known.contains(rec.station_id.as_str()) {
            return Err(ModelError::UnknownStation(rec.station_id.clone()));
        }
        let key = match grouping {
            Grouping::PerUser => rec.user_id.clone(),
            Grouping::PerUserPerDay => {
                format!("{}@{}", rec.user_id, date_of(rec.timestamp).format("%Y-%m-%d"))
            }
        };
        groups
            .entry(key)
            .or_insert_with(|| (rec.user_id.clone(), Vec::new()))
            .1
            .push(TrajectoryPoint {
                station_id: rec.station_id.clone(),
                timestamp: rec.timestamp,
            });
    }
    Ok(groups
        .into_iter()
        .map(|(id, (user_id, mut points))| {
            points.sort_by(|a, b| {
                a.timestamp
                    .cmp(&b.timestamp)
                    .then_with(|| a.station_id.cmp(&b.station_id))
            });
            points.dedup();
            Trajectory {
                id,
                user_id,
                points,
            }
        })
        .collect())
}

/// Lookup table from station id to station.
pub fn station_map(stations: &[Station]) -> HashMap<&str, &Station> {
    stations.iter().map(|s| (s.id.as_str(), s)).collect()
}

pub fn write_stations<W: std::io::Write>(w: W, stations: &[Station]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "lon", "lat"])?;
    for s in stations {
        wtr.write_record([s.id.clone(), format!("{:.6}", s.lon), format!("{:.6}", s.lat)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_pois<W: std::io::Write>(w: W, pois: &[Poi]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "name", "category", "description", "lon", "lat"])?;
    for p in pois {
        wtr.write_record([
            p.id.clone(),
            p.name.clone(),
            p.category.clone(),
            p.description.clone(),
            format!("{:.6}", p.lon),
            format!("{:.6}", p.lat),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_records<W: std::io::Write>(w: W, records: &[RawRecord]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["user_id", "station_id", "timestamp"])?;
    for r in records {
        wtr.write_record([
            r.user_id.clone(),
            r.station_id.clone(),
            format_timestamp(r.timestamp),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stations() -> Vec<Station> {
        ["s1", "s2", "s3"]
            .iter()
            .enumerate()
            .map(|(i, id)| Station {
                id: id.to_string(),
                lon: 120.0 + i as f64 * 0.01,
                lat: 28.0,
            })
            .collect()
    }

    fn rec(user: &str, station: &str, ts: i64) -> RawRecord {
        RawRecord {
            user_id: user.into(),
            station_id: station.into(),
            timestamp: ts,
        }
    }

    #[test]
    fn empty_records_file_is_empty_list() {
        let records = read_records("user_id,station_id,timestamp\n".as_bytes()).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn duplicate_station_rejected() {
        let err = read_stations("id,lon,lat\ns1,120.1,28.0\ns1,121,28\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ModelError::DuplicateId(ref id) if id == "s1"));
    }

    #[test]
    fn timestamps_match_hand_conversion() {
        let csv = "user_id,station_id,timestamp\n\
                   u1,s1,2014-01-10T07:30:00\n\
                   u1,s2,1389339000\n\
                   u2,s3,1970-01-02T00:00:01\n";
        let records = read_records(csv.as_bytes()).unwrap();
        // 2014-01-10 = 16080 days after 1970-01-01; 16080*86400 + 7.5h
        assert_eq!(records[0].timestamp, 16080 * 86_400 + 7 * 3600 + 1800);
        assert_eq!(records[1].timestamp, 1_389_339_000);
        assert_eq!(records[2].timestamp, 86_401);
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "user_id,station_id,timestamp\nu1,s1,2014-01-10T07:30:00\nu1,s2,yesterday\n";
        match read_records(csv.as_bytes()).unwrap_err() {
            ModelError::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad = "id,lon,lat\ns1,200,28\n";
        assert!(matches!(
            read_stations(bad.as_bytes()),
            Err(ModelError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn quoted_poi_fields_and_empty_description() {
        let csv = "id,name,category,description,lon,lat\n\
                   p1,\"Baihua park, No.7\",park,,120.1,28.0\n";
        let pois = read_pois(csv.as_bytes()).unwrap();
        assert_eq!(pois[0].name, "Baihua park, No.7");
        assert_eq!(pois[0].description, "");
    }

    #[test]
    fn shuffled_day_sorts_ascending() {
        let records = vec![rec("u", "s2", 300), rec("u", "s1", 100), rec("u", "s3", 200)];
        let trajs = assemble_trajectories(&records, &stations(), Grouping::PerUserPerDay).unwrap();
        assert_eq!(trajs.len(), 1);
        let ts: Vec<i64> = trajs[0].points.iter().map(|p| p.timestamp).collect();
        assert_eq!(ts, vec![100, 200, 300]);
        assert_eq!(trajs[0].id, "u@1970-01-01");
    }

    #[test]
    fn two_users_per_user_counts() {
        let records = vec![
            rec("a", "s1", 10),
            rec("b", "s1", 10),
            rec("a", "s2", 20),
            rec("b", "s3", 30),
            rec("a", "s3", SECONDS_PER_DAY + 5),
            rec("a", "s3", SECONDS_PER_DAY + 5),
        ];
        let trajs = assemble_trajectories(&records, &stations(), Grouping::PerUser).unwrap();
        let counts: Vec<(&str, usize)> = trajs
            .iter()
            .map(|t| (t.id.as_str(), t.points.len()))
            .collect();
        assert_eq!(counts, vec![("a", 3), ("b", 2)]);
        let per_day = assemble_trajectories(&records, &stations(), Grouping::PerUserPerDay).unwrap();
        assert_eq!(per_day.len(), 3);
    }

    #[test]
    fn unknown_station_rejected() {
        let err = assemble_trajectories(&[rec("u", "zz", 1)], &stations(), Grouping::PerUser)
            .unwrap_err();
        assert!(matches!(err, ModelError::UnknownStation(ref s) if s == "zz"));
    }

    #[test]
    fn window_helpers() {
        assert!(TimeWindow::new(5, 5).is_none());
        let w = TimeWindow::new(0, 10).unwrap();
        assert!(w.contains(0) && !w.contains(10));
        assert!(TimeWindow::UNBOUNDED.is_unbounded());
        assert_eq!(
            w.intersect(&TimeWindow::new(5, 20).unwrap()),
            TimeWindow::new(5, 10)
        );
    }
}
