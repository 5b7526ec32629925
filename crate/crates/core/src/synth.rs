//! Deterministic synthetic city and commuter population.
//!
//! Stations are scattered uniformly over a bounding box; POIs cluster around
//! functional zones, each with its own category mix. Every user has a home,
//! a work place and a leisure spot, and emits heartbeat records while at
//! each and a few hops while travelling between them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{day_start, write_pois, write_records, write_stations, Poi, RawRecord, Station};
use crate::psr::{StationLocator, PsrError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub name: String,
    /// `(lon, lat)`.
    pub center: (f64, f64),
    /// Standard deviation of POI scatter, in degrees.
    pub radius: f64,
    pub category_mix: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_stations: usize,
    pub n_pois: usize,
    pub n_users: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    /// `(min_lon, min_lat, max_lon, max_lat)`.
    pub bbox: (f64, f64, f64, f64),
    pub zones: Vec<Zone>,
    /// Mean seconds between heartbeat records while dwelling.
    pub heartbeat_s: i64,
    /// Share of users who live and study on campus.
    pub student_share: f64,
    pub seed: u64,
}

fn mix(items: &[(&str, f64)]) -> Vec<(String, f64)> {
    items.iter().map(|(c, w)| (c.to_string(), *w)).collect()
}

pub fn default_zones() -> Vec<Zone> {
    let zone = |name: &str, lon: f64, lat: f64, radius: f64, m: &[(&str, f64)]| Zone {
        name: name.into(),
        center: (lon, lat),
        radius,
        category_mix: mix(m),
    };
    vec![
        zone(
            "campus",
            120.58,
            27.97,
            0.012,
            &[("university", 0.45), ("school", 0.2), ("restaurant", 0.15), ("residential", 0.1), ("shopping", 0.1)],
        ),
        zone(
            "business",
            120.70,
            28.01,
            0.012,
            &[("office", 0.45), ("bank", 0.2), ("restaurant", 0.15), ("hotel", 0.1), ("shopping", 0.1)],
        ),
        zone(
            "residential",
            120.66,
            27.96,
            0.015,
            &[("residential", 0.55), ("shopping", 0.15), ("restaurant", 0.15), ("school", 0.1), ("hospital", 0.05)],
        ),
        zone(
            "scenic",
            120.62,
            28.04,
            0.01,
            &[("scenic", 0.4), ("park", 0.3), ("hotel", 0.15), ("restaurant", 0.15)],
        ),
        zone(
            "downtown",
            120.65,
            28.005,
            0.01,
            &[("hospital", 0.3), ("shopping", 0.3), ("restaurant", 0.2), ("transport", 0.2)],
        ),
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_stations: 60,
            n_pois: 2400,
            n_users: 200,
            n_days: 2,
            start_date: NaiveDate::from_ymd_opt(2014, 1, 10).expect("valid date"),
            bbox: (120.55, 27.94, 120.75, 28.06),
            zones: default_zones(),
            heartbeat_s: 1200,
            student_share: 0.25,
            seed: 7,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("zone {0:?} has an empty or non-positive category mix")]
    BadMix(String),
    #[error("need at least 2 stations so home and work differ")]
    TooFewStations,
    #[error(transparent)]
    Psr(#[from] PsrError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub station_id: String,
    pub arrive: i64,
    pub leave: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user_id: String,
    pub kind: String,
    pub home: String,
    pub work: String,
    pub leisure: String,
    /// Per day, the dwell visits in order.
    pub itineraries: Vec<Vec<Visit>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub users: Vec<UserTruth>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub stations: Vec<Station>,
    pub pois: Vec<Poi>,
    pub records: Vec<RawRecord>,
    pub ground_truth: GroundTruth,
}

const PLACE_NAMES: &[&str] = &[
    "Lucheng", "Ouhai", "Longwan", "Wuma", "Xinhe", "Huanghe", "Nanpu", "Shuixin", "Jinxiu", "Songtai", "Chashan",
    "Yangfu", "Xishan", "Huaihe", "Guodu", "Minjiang", "Xiaonan", "Feixia", "Jiushan", "Pujiang",
];

fn name_suffixes(category: &str) -> &'static [&'static str] {
    match category {
        "university" => &["University", "College", "Students Dormitory", "Teaching Building", "Library"],
        "school" => &["Middle School", "Primary School", "Students Canteen"],
        "residential" => &["Garden", "Residence", "Apartments", "Community"],
        "office" => &["Tower", "Plaza", "Building", "Business Center"],
        "bank" => &["Bank", "Savings Bank"],
        "hospital" => &["Hospital", "Clinic", "Pharmacy"],
        "restaurant" => &["Restaurant", "Noodle House", "Hotpot", "Tea House"],
        "hotel" => &["Hotel", "Inn"],
        "shopping" => &["Mall", "Supermarket", "Market"],
        "park" => &["Park", "Garden Park"],
        "scenic" => &["Scenic Area", "Temple", "Pagoda"],
        "transport" => &["Bus Station", "Train Station", "Ferry Terminal"],
        _ => &["Place"],
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn pick_weighted<'a>(rng: &mut ChaCha8Rng, items: &'a [(String, f64)]) -> &'a str {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut t = rng.random::<f64>() * total;
    for (c, w) in items {
        if t < *w {
            return c;
        }
        t -= w;
    }
    &items[items.len() - 1].0
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        for (name, n) in [
            ("n_stations", self.n_stations),
            ("n_pois", self.n_pois),
            ("n_users", self.n_users),
            ("n_days", self.n_days),
        ] {
            if n == 0 {
                return Err(SynthError::ZeroCount(name));
            }
        }
        if self.zones.is_empty() {
            return Err(SynthError::ZeroCount("zones"));
        }
        if self.n_stations < 2 {
            return Err(SynthError::TooFewStations);
        }
        for z in &self.zones {
            if z.category_mix.is_empty()
                || z.category_mix.iter().any(|(_, w)| *w < 0.0)
                || z.category_mix.iter().map(|(_, w)| w).sum::<f64>() <= 0.0
            {
                return Err(SynthError::BadMix(z.name.clone()));
            }
        }
        Ok(())
    }

    fn clamp(&self, lon: f64, lat: f64) -> (f64, f64) {
        let (x0, y0, x1, y1) = self.bbox;
        (round6(lon.clamp(x0, x1)), round6(lat.clamp(y0, y1)))
    }

    fn zone_point(&self, rng: &mut ChaCha8Rng, zone: &Zone) -> (f64, f64) {
        let n = Normal::new(0.0, zone.radius.max(1e-9)).expect("finite sigma");
        self.clamp(zone.center.0 + n.sample(rng), zone.center.1 + n.sample(rng))
    }

    fn zone(&self, name: &str) -> &Zone {
        self.zones.iter().find(|z| z.name == name).unwrap_or(&self.zones[0])
    }
}

/// Landmarks placed at zone centers so case-study style queries have
/// something to hit.
const LANDMARKS: &[(&str, &str, &str)] = &[
    ("Jiangxin Island Scenic Park", "scenic", "scenic"),
    ("Wuhua Building", "office", "business"),
];

pub fn generate(config: &SynthConfig) -> Result<SynthData, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (x0, y0, x1, y1) = config.bbox;

    let mut stations: Vec<Station> = Vec::with_capacity(config.n_stations);
    let mut seen = std::collections::HashSet::new();
    while stations.len() < config.n_stations {
        let (lon, lat) = config.clamp(rng.random_range(x0..=x1), rng.random_range(y0..=y1));
        if seen.insert(((lon * 1e6) as i64, (lat * 1e6) as i64)) {
            stations.push(Station {
                id: format!("s{:04}", stations.len()),
                lon,
                lat,
            });
        }
    }
    let locator = StationLocator::new(&stations)?;

    let mut pois: Vec<Poi> = Vec::with_capacity(config.n_pois);
    for (name, category, zone) in LANDMARKS.iter().take(config.n_pois) {
        let z = config.zone(zone);
        let (lon, lat) = config.clamp(z.center.0, z.center.1);
        pois.push(Poi {
            id: format!("p{:05}", pois.len()),
            name: name.to_string(),
            category: category.to_string(),
            description: format!("{category} landmark in the {} district", z.name),
            lon,
            lat,
            region_id: None,
        });
    }
    while pois.len() < config.n_pois {
        let zone = &config.zones[rng.random_range(0..config.zones.len())];
        let category = pick_weighted(&mut rng, &zone.category_mix).to_string();
        let (lon, lat) = config.zone_point(&mut rng, zone);
        let place = PLACE_NAMES.choose(&mut rng).expect("non-empty");
        let suffix = name_suffixes(&category).choose(&mut rng).expect("non-empty");
        pois.push(Poi {
            id: format!("p{:05}", pois.len()),
            name: format!("{place} {suffix}"),
            description: format!("{category} in the {} district", zone.name),
            category,
            lon,
            lat,
            region_id: None,
        });
    }

    let nearest = |(lon, lat): (f64, f64)| locator.nearest_lonlat(lon, lat).to_string();
    let mut records: Vec<RawRecord> = Vec::new();
    let mut users: Vec<UserTruth> = Vec::with_capacity(config.n_users);
    for u in 0..config.n_users {
        let user_id = format!("u{u:04}");
        let student = rng.random::<f64>() < config.student_share;
        let (home_zone, work_zone) = if student {
            ("campus", "campus")
        } else {
            ("residential", if rng.random::<f64>() < 0.7 { "business" } else { "downtown" })
        };
        let home = nearest(config.zone_point(&mut rng, config.zone(home_zone)));
        let mut work = nearest(config.zone_point(&mut rng, config.zone(work_zone)));
        let mut tries = 0;
        while work == home {
            tries += 1;
            work = if tries < 20 {
                nearest(config.zone_point(&mut rng, config.zone(work_zone)))
            } else {
                stations.iter().find(|s| s.id != home).expect("two stations").id.clone()
            };
        }
        let leisure_zone = if rng.random::<bool>() { "scenic" } else { "downtown" };
        let leisure = nearest(config.zone_point(&mut rng, config.zone(leisure_zone)));

        let pos = |id: &str| {
            let s = stations.iter().find(|s| s.id == id).expect("generated station");
            (s.lon, s.lat)
        };
        let (home_p, work_p, leisure_p) = (pos(&home), pos(&work), pos(&leisure));

        let mut itineraries = Vec::with_capacity(config.n_days);
        for d in 0..config.n_days {
            let day = day_start(config.start_date + chrono::Days::new(d as u64));
            let jitter = |rng: &mut ChaCha8Rng, spread: i64| rng.random_range(-spread..=spread);
            let leave_home = day + 7 * 3600 + jitter(&mut rng, 900);
            let arrive_work = day + 9 * 3600 - 600 + jitter(&mut rng, 300);
            let leave_work = day + 17 * 3600 + 300 + jitter(&mut rng, 300);
            let evening_out = rng.random::<f64>() < 0.5;
            let back_home = day + 20 * 3600 - 300 + jitter(&mut rng, 200);

            let mut visits = vec![Visit {
                station_id: home.clone(),
                arrive: day,
                leave: leave_home,
            }];
            let mut hops: Vec<(i64, i64, (f64, f64), (f64, f64))> = vec![(leave_home, arrive_work, home_p, work_p)];
            visits.push(Visit {
                station_id: work.clone(),
                arrive: arrive_work,
                leave: leave_work,
            });
            if evening_out {
                let arrive_l = day + 18 * 3600 + jitter(&mut rng, 300);
                let leave_l = day + 19 * 3600 + 1800 + jitter(&mut rng, 300);
                hops.push((leave_work, arrive_l, work_p, leisure_p));
                visits.push(Visit {
                    station_id: leisure.clone(),
                    arrive: arrive_l,
                    leave: leave_l,
                });
                hops.push((leave_l, back_home, leisure_p, home_p));
            } else {
                hops.push((leave_work, back_home, work_p, home_p));
            }
            visits.push(Visit {
                station_id: home.clone(),
                arrive: back_home,
                leave: day + 86_399,
            });

            for v in &visits {
                let mut t = v.arrive + rng.random_range(0..config.heartbeat_s.max(1));
                records.push(RawRecord {
                    user_id: user_id.clone(),
                    station_id: v.station_id.clone(),
                    timestamp: v.arrive,
                });
                while t < v.leave {
                    records.push(RawRecord {
                        user_id: user_id.clone(),
                        station_id: v.station_id.clone(),
                        timestamp: t,
                    });
                    let step = config.heartbeat_s / 2 + rng.random_range(0..=config.heartbeat_s.max(1));
                    t += step.max(1);
                }
            }
            for (from_t, to_t, a, b) in hops {
                let n_hops = 3;
                for h in 1..=n_hops {
                    let f = h as f64 / (n_hops + 1) as f64;
                    let p = (a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f);
                    records.push(RawRecord {
                        user_id: user_id.clone(),
                        station_id: nearest(p),
                        timestamp: from_t + ((to_t - from_t) as f64 * f) as i64,
                    });
                }
            }
            itineraries.push(visits);
        }
        users.push(UserTruth {
            user_id,
            kind: if student { "student" } else { "commuter" }.to_string(),
            home,
            work,
            leisure,
            itineraries,
        });
    }
    records.sort_by(|a, b| {
        (a.user_id.as_str(), a.timestamp, a.station_id.as_str()).cmp(&(b.user_id.as_str(), b.timestamp, b.station_id.as_str()))
    });
    records.dedup();

    Ok(SynthData {
        stations,
        pois,
        records,
        ground_truth: GroundTruth {
            seed: config.seed,
            users,
        },
    })
}

impl SynthData {
    /// Writes `stations.csv`, `pois.csv`, `records.csv` and
    /// `ground_truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        write_stations(fs::File::create(dir.join("stations.csv"))?, &self.stations)?;
        write_pois(fs::File::create(dir.join("pois.csv"))?, &self.pois)?;
        write_records(fs::File::create(dir.join("records.csv"))?, &self.records)?;
        fs::write(dir.join("ground_truth.json"), serde_json::to_vec_pretty(&self.ground_truth)?)?;
        Ok(())
    }

    /// Ground-truth `(home, work)` per user id.
    pub fn home_work(&self) -> BTreeMap<&str, (&str, &str)> {
        self.ground_truth
            .users
            .iter()
            .map(|u| (u.user_id.as_str(), (u.home.as_str(), u.work.as_str())))
            .collect()
    }
}
