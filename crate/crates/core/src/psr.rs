//! Possible spatial regions: the Voronoi cells of base stations.
//!
//! Membership is always answered as "nearest station under the local
//! projection", which is the same set as the Voronoi cell. Explicit cell
//! polygons are only built for display.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::{Poi, Station};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, thiserror::Error)]
pub enum PsrError {
    #[error("no stations to partition space with")]
    NoStations,
    #[error("stations {0:?} and {1:?} share a position")]
    DuplicateStationPosition(String, String),
}

impl PsrError {
    pub fn name(&self) -> &'static str {
        match self {
            PsrError::NoStations => "NoStations",
            PsrError::DuplicateStationPosition(..) => "DuplicateStationPosition",
        }
    }
}

/// Equirectangular projection to local meters:
/// `x = R·Δlon·cos(lat0)`, `y = R·Δlat` (angles in radians).
pub fn project(lon: f64, lat: f64, origin: (f64, f64)) -> (f64, f64) {
    let (lon0, lat0) = origin;
    let x = EARTH_RADIUS_M * (lon - lon0).to_radians() * lat0.to_radians().cos();
    let y = EARTH_RADIUS_M * (lat - lat0).to_radians();
    (x, y)
}

/// Projection anchored at the center of the stations' lon/lat bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin: (f64, f64),
}

impl Projection {
    pub fn for_stations(stations: &[Station]) -> Projection {
        if stations.is_empty() {
            return Projection { origin: (0.0, 0.0) };
        }
        let (mut lo_lon, mut hi_lon) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_lat, mut hi_lat) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in stations {
            lo_lon = lo_lon.min(s.lon);
            hi_lon = hi_lon.max(s.lon);
            lo_lat = lo_lat.min(s.lat);
            hi_lat = hi_lat.max(s.lat);
        }
        Projection {
            origin: ((lo_lon + hi_lon) / 2.0, (lo_lat + hi_lat) / 2.0),
        }
    }

    pub fn apply(&self, lon: f64, lat: f64) -> (f64, f64) {
        project(lon, lat, self.origin)
    }
}

/// Axis-aligned rectangle in projected meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    /// Bounding box of `points`, grown by `margin` on every side.
    pub fn around(points: impl IntoIterator<Item = (f64, f64)>, margin: f64) -> BBox {
        let mut b = BBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            b.min_x = b.min_x.min(x);
            b.min_y = b.min_y.min(y);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        }
        b.min_x -= margin;
        b.min_y -= margin;
        b.max_x += margin;
        b.max_y += margin;
        b
    }

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        self.min_x <= x && x <= self.max_x && self.min_y <= y && y <= self.max_y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAssignment {
    pub projection: Projection,
    pub poi_region: BTreeMap<String, String>,
    /// Every station appears, possibly with an empty list. Lists are sorted.
    pub region_pois: BTreeMap<String, Vec<String>>,
}

impl RegionAssignment {
    pub fn region_of(&self, poi_id: &str) -> Option<&str> {
        self.poi_region.get(poi_id).map(String::as_str)
    }

    pub fn pois_in(&self, station_id: &str) -> &[String] {
        self.region_pois
            .get(station_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// 2-d tree over projected station positions.
///
/// Nearest queries order candidates by `(squared distance, station id)` so
/// equidistant stations resolve to the lexicographically smaller id.
#[derive(Debug, Clone)]
pub struct StationLocator {
    projection: Projection,
    ids: Vec<String>,
    points: Vec<(f64, f64)>,
    // Implicit tree: `order[lo..hi]` with the median at the midpoint.
    order: Vec<usize>,
}

impl StationLocator {
    pub fn new(stations: &[Station]) -> Result<StationLocator, PsrError> {
        if stations.is_empty() {
            return Err(PsrError::NoStations);
        }
        let projection = Projection::for_stations(stations);
        let ids = stations.iter().map(|s| s.id.clone()).collect();
        let points: Vec<(f64, f64)> = stations
            .iter()
            .map(|s| projection.apply(s.lon, s.lat))
            .collect();
        let mut order: Vec<usize> = (0..stations.len()).collect();
        build_kd(&points, &mut order, 0);
        Ok(StationLocator {
            projection,
            ids,
            points,
            order,
        })
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }

    pub fn nearest_lonlat(&self, lon: f64, lat: f64) -> &str {
        self.nearest(self.projection.apply(lon, lat))
    }

    pub fn nearest(&self, p: (f64, f64)) -> &str {
        let mut best: Option<(f64, usize)> = None;
        self.search(p, 0, self.order.len(), 0, &mut best);
        &self.ids[best.expect("locator is non-empty").1]
    }

    fn better(&self, d: f64, i: usize, best: &Option<(f64, usize)>) -> bool {
        match best {
            None => true,
            Some((bd, bi)) => match d.partial_cmp(bd).unwrap_or(Ordering::Equal) {
                Ordering::Less => true,
                Ordering::Equal => self.ids[i] < self.ids[*bi],
                Ordering::Greater => false,
            },
        }
    }

    fn search(
        &self,
        p: (f64, f64),
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut Option<(f64, usize)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let q = self.points[idx];
        let d = dist2(p, q);
        if self.better(d, idx, best) {
            *best = Some((d, idx));
        }
        let diff = if depth.is_multiple_of(2) { p.0 - q.0 } else { p.1 - q.1 };
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(p, near.0, near.1, depth + 1, best);
        // Visit the far side on equality too, so ties can be resolved by id.
        if best.is_none_or(|(bd, _)| diff * diff <= bd) {
            self.search(p, far.0, far.1, depth + 1, best);
        }
    }
}

fn build_kd(points: &[(f64, f64)], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let key = |i: &usize| if depth.is_multiple_of(2) { points[*i].0 } else { points[*i].1 };
    order.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
    let mid = order.len() / 2;
    let (left, right) = order.split_at_mut(mid);
    build_kd(points, left, depth + 1);
    build_kd(points, &mut right[1..], depth + 1);
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Maps every POI to its nearest station (ties to the smaller station id).
pub fn assign_regions(stations: &[Station], pois: &[Poi]) -> Result<RegionAssignment, PsrError> {
    let locator = StationLocator::new(stations)?;
    let mut poi_region = BTreeMap::new();
    let mut region_pois: BTreeMap<String, Vec<String>> = stations
        .iter()
        .map(|s| (s.id.clone(), Vec::new()))
        .collect();
    for poi in pois {
        let station = locator.nearest_lonlat(poi.lon, poi.lat).to_string();
        region_pois
            .get_mut(&station)
            .expect("station registered")
            .push(poi.id.clone());
        poi_region.insert(poi.id.clone(), station);
    }
    for list in region_pois.values_mut() {
        list.sort();
    }
    Ok(RegionAssignment {
        projection: locator.projection(),
        poi_region,
        region_pois,
    })
}

/// Writes the assigned region into each POI.
pub fn annotate_pois(pois: &mut [Poi], assignment: &RegionAssignment) {
    for poi in pois {
        poi.region_id = assignment.region_of(&poi.id).map(str::to_string);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPolygon {
    pub station_id: String,
    /// Counter-clockwise ring; the closing vertex is not repeated.
    pub vertices: Vec<[f64; 2]>,
}

impl RegionPolygon {
    /// Point-in-convex-polygon test, boundary inclusive (with `eps` slack).
    pub fn contains(&self, (x, y): (f64, f64), eps: f64) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let [ax, ay] = self.vertices[i];
            let [bx, by] = self.vertices[(i + 1) % n];
            let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
            let len = ((bx - ax).hypot(by - ay)).max(f64::MIN_POSITIVE);
            cross / len >= -eps
        })
    }
}

/// Voronoi cells by direct half-plane clipping of `bbox`, O(n²).
pub fn voronoi_polygons(
    stations: &[Station],
    projection: &Projection,
    bbox: BBox,
) -> Result<Vec<RegionPolygon>, PsrError> {
    if stations.is_empty() {
        return Err(PsrError::NoStations);
    }
    let pts: Vec<(f64, f64)> = stations
        .iter()
        .map(|s| projection.apply(s.lon, s.lat))
        .collect();
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    for (i, p) in pts.iter().enumerate() {
        if !seen.insert((p.0.to_bits(), p.1.to_bits())) {
            let j = pts.iter().position(|q| q == p).expect("seen earlier");
            return Err(PsrError::DuplicateStationPosition(
                stations[j].id.clone(),
                stations[i].id.clone(),
            ));
        }
    }
    let rect = vec![
        (bbox.min_x, bbox.min_y),
        (bbox.max_x, bbox.min_y),
        (bbox.max_x, bbox.max_y),
        (bbox.min_x, bbox.max_y),
    ];
    Ok(stations
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut ring = rect.clone();
            for (j, t) in pts.iter().enumerate() {
                if i == j || ring.is_empty() {
                    continue;
                }
                ring = clip_closer(&ring, pts[i], *t);
            }
            RegionPolygon {
                station_id: s.id.clone(),
                vertices: ring.into_iter().map(|(x, y)| [x, y]).collect(),
            }
        })
        .collect())
}

/// Keeps the part of `ring` at least as close to `s` as to `t`.
fn clip_closer(ring: &[(f64, f64)], s: (f64, f64), t: (f64, f64)) -> Vec<(f64, f64)> {
    // |p-s|² <= |p-t|²  <=>  n·p <= c  with n = t - s, c = (|t|² - |s|²)/2
    let n = (t.0 - s.0, t.1 - s.1);
    let c = ((t.0 * t.0 + t.1 * t.1) - (s.0 * s.0 + s.1 * s.1)) / 2.0;
    let side = |p: (f64, f64)| n.0 * p.0 + n.1 * p.1 - c;
    let mut out = Vec::with_capacity(ring.len() + 1);
    for k in 0..ring.len() {
        let a = ring[k];
        let b = ring[(k + 1) % ring.len()];
        let (fa, fb) = (side(a), side(b));
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let r = fa / (fa - fb);
            out.push((a.0 + r * (b.0 - a.0), a.1 + r * (b.1 - a.1)));
        }
    }
    out
}
