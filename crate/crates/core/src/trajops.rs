//! Semantic trajectory operations over per-point topic vectors: edit-style
//! distance (ordered DP and unordered assignment), stopovers, threshold
//! filtering, home/work extraction and k-means.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{seconds_of_day, TimeWindow, Trajectory};
use crate::topics::TopicModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajOpsError {
    #[error("topic vectors differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("topic index {index} out of range for {topics} topics")]
    BadTopicIndex { index: usize, topics: usize },
    #[error("k = {k} but only {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("weights must be non-negative")]
    NegativeWeight,
}

impl TrajOpsError {
    pub fn name(&self) -> &'static str {
        match self {
            TrajOpsError::DimensionMismatch(..) => "DimensionMismatch",
            TrajOpsError::BadTopicIndex { .. } => "BadTopicIndex",
            TrajOpsError::KTooLarge { .. } => "KTooLarge",
            TrajOpsError::NegativeWeight => "NegativeWeight",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWeights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        MatchWeights { w1: 1.0, w2: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub cost: f64,
    pub matched: Vec<(usize, usize)>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check<V: AsRef<[f64]>>(a: &[V], b: &[V], w: MatchWeights) -> Result<(), TrajOpsError> {
    if w.w1 < 0.0 || w.w2 < 0.0 {
        return Err(TrajOpsError::NegativeWeight);
    }
    let mut dim = None;
    for v in a.iter().chain(b) {
        let n = v.as_ref().len();
        match dim {
            None => dim = Some(n),
            Some(d) if d != n => return Err(TrajOpsError::DimensionMismatch(d, n)),
            _ => {}
        }
    }
    Ok(())
}

fn complete(matched: Vec<(usize, usize)>, n: usize, m: usize, cost: f64) -> MatchResult {
    let mut used_a = vec![false; n];
    let mut used_b = vec![false; m];
    for &(i, j) in &matched {
        used_a[i] = true;
        used_b[j] = true;
    }
    MatchResult {
        cost,
        matched,
        unmatched_a: (0..n).filter(|&i| !used_a[i]).collect(),
        unmatched_b: (0..m).filter(|&j| !used_b[j]).collect(),
    }
}

/// Minimum-cost order-preserving partial matching.
pub fn distance_ordered<V: AsRef<[f64]>>(a: &[V], b: &[V], w: MatchWeights) -> Result<MatchResult, TrajOpsError> {
    check(a, b, w)?;
    let (n, m) = (a.len(), b.len());
    let gap_a: Vec<f64> = a.iter().map(|v| w.w2 * norm(v.as_ref())).collect();
    let gap_b: Vec<f64> = b.iter().map(|v| w.w2 * norm(v.as_ref())).collect();
    let mut d = vec![vec![0.0; m + 1]; n + 1];
    for i in 1..=n {
        d[i][0] = d[i - 1][0] + gap_a[i - 1];
    }
    for j in 1..=m {
        d[0][j] = d[0][j - 1] + gap_b[j - 1];
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + w.w1 * euclidean(a[i - 1].as_ref(), b[j - 1].as_ref());
            d[i][j] = diag.min(d[i - 1][j] + gap_a[i - 1]).min(d[i][j - 1] + gap_b[j - 1]);
        }
    }
    // Traceback prefers the diagonal on ties.
    let mut matched = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let diag = d[i - 1][j - 1] + w.w1 * euclidean(a[i - 1].as_ref(), b[j - 1].as_ref());
        if d[i][j] == diag {
            matched.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if d[i][j] == d[i - 1][j] + gap_a[i - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    matched.reverse();
    Ok(complete(matched, n, m, d[n][m]))
}

/// Minimum-cost partial matching ignoring order, solved as an assignment on
/// the padded `(n+m)²` matrix.
pub fn distance_unordered<V: AsRef<[f64]>>(a: &[V], b: &[V], w: MatchWeights) -> Result<MatchResult, TrajOpsError> {
    check(a, b, w)?;
    let (n, m) = (a.len(), b.len());
    let size = n + m;
    if size == 0 {
        return Ok(complete(Vec::new(), 0, 0, 0.0));
    }
    let mut cost = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in 0..size {
            cost[i][j] = match (i < n, j < m) {
                (true, true) => w.w1 * euclidean(a[i].as_ref(), b[j].as_ref()),
                (true, false) => w.w2 * norm(a[i].as_ref()),
                (false, true) => w.w2 * norm(b[j].as_ref()),
                (false, false) => 0.0,
            };
        }
    }
    let assign = hungarian(&cost);
    let mut matched: Vec<(usize, usize)> = (0..n).filter(|&i| assign[i] < m).map(|i| (i, assign[i])).collect();
    matched.sort_unstable();
    let total = (0..size).map(|i| cost[i][assign[i]]).sum();
    Ok(complete(matched, n, m, total))
}

/// Kuhn-Munkres with potentials on a square matrix; returns row -> column.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row[p[j] - 1] = j - 1;
        }
    }
    row
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stopover {
    pub region_id: String,
    pub start: i64,
    pub end: i64,
    pub duration: i64,
}

pub fn stopovers(trajectory: &Trajectory) -> Vec<Stopover> {
    let mut out: Vec<Stopover> = Vec::new();
    for p in &trajectory.points {
        match out.last_mut() {
            Some(s) if s.region_id == p.station_id => {
                s.end = p.timestamp;
                s.duration = s.end - s.start;
            }
            _ => out.push(Stopover {
                region_id: p.station_id.clone(),
                start: p.timestamp,
                end: p.timestamp,
                duration: 0,
            }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPredicate {
    pub topic_index: usize,
    pub min_probability: f64,
    pub min_stopover_s: i64,
    pub window: TimeWindow,
}

/// Keeps trajectories with a long-enough stopover, overlapping the window,
/// in a region whose topic probability clears the threshold. Regions the
/// model has never seen count as uniform.
pub fn filter_trajectories<'a>(
    trajectories: &'a [Trajectory],
    model: &TopicModel,
    predicate: &FilterPredicate,
) -> Result<Vec<&'a Trajectory>, TrajOpsError> {
    if predicate.topic_index >= model.topics {
        return Err(TrajOpsError::BadTopicIndex {
            index: predicate.topic_index,
            topics: model.topics,
        });
    }
    let uniform = 1.0 / model.topics as f64;
    Ok(trajectories
        .iter()
        .filter(|t| {
            stopovers(t).iter().any(|s| {
                let prob = model
                    .region_vector(&s.region_id)
                    .map_or(uniform, |q| q[predicate.topic_index]);
                prob >= predicate.min_probability
                    && s.duration >= predicate.min_stopover_s
                    && predicate.window.overlaps_closed(s.start, s.end)
            })
        })
        .collect())
}

/// Seconds-of-day ranges used to locate home and work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomeWorkHours {
    pub night: (i64, i64),
    pub day: (i64, i64),
}

impl Default for HomeWorkHours {
    fn default() -> Self {
        HomeWorkHours {
            night: (0, 6 * 3600),
            day: (9 * 3600, 17 * 3600),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeWork {
    pub home: Option<String>,
    pub work: Option<String>,
    /// Home topic vector followed by work topic vector; zeros when absent.
    pub feature: Vec<f64>,
}

fn busiest<'a>(trajectory: &'a Trajectory, hours: (i64, i64), skip: Option<&str>) -> Option<String> {
    let mut counts: BTreeMap<&'a str, usize> = BTreeMap::new();
    for p in &trajectory.points {
        let s = seconds_of_day(p.timestamp);
        if s >= hours.0 && s < hours.1 && Some(p.station_id.as_str()) != skip {
            *counts.entry(&p.station_id).or_default() += 1;
        }
    }
    // BTreeMap order makes the smaller id win ties.
    let mut best: Option<(&str, usize)> = None;
    for (id, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((id, c));
        }
    }
    best.map(|(id, _)| id.to_string())
}

pub fn extract_home_work(trajectory: &Trajectory, model: &TopicModel, hours: &HomeWorkHours) -> HomeWork {
    let home = busiest(trajectory, hours.night, None);
    let work = busiest(trajectory, hours.day, home.as_deref());
    let t = model.topics;
    let mut feature = vec![0.0; 2 * t];
    for (slot, region) in [&home, &work].into_iter().enumerate() {
        if let Some(r) = region {
            let q = model.region_vector(r).map(<[f64]>::to_vec).unwrap_or_else(|| model.uniform());
            feature[slot * t..(slot + 1) * t].copy_from_slice(&q);
        }
    }
    HomeWork { home, work, feature }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(features: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeans, TrajOpsError> {
    let n = features.len();
    if k == 0 || k > n {
        return Err(TrajOpsError::KTooLarge { k, n });
    }
    let dim = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(TrajOpsError::DimensionMismatch(dim, f.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = vec![features[rng.random_range(0..n)].clone()];
    let mut chosen = vec![false; n];
    while centroids.len() < k {
        let d2: Vec<f64> = features.iter().map(|f| nearest(f, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // All remaining points coincide with a centroid: take the first unused.
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.push(features[pick].clone());
    }

    let mut assignments = vec![usize::MAX; n];
    let mut objective = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut total = 0.0;
        for (i, f) in features.iter().enumerate() {
            let (c, d) = nearest(f, &centroids);
            total += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        objective.push(total);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (f, &c) in features.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(f) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(KMeans {
        assignments,
        centroids,
        objective,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrajectoryPoint;

    fn traj(points: &[(&str, i64)]) -> Trajectory {
        Trajectory {
            id: "u@2014-01-10".into(),
            user_id: "u".into(),
            points: points
                .iter()
                .map(|(s, t)| TrajectoryPoint {
                    station_id: s.to_string(),
                    timestamp: *t,
                })
                .collect(),
        }
    }

    fn model(regions: &[(&str, Vec<f64>)]) -> TopicModel {
        let t = regions[0].1.len();
        TopicModel {
            topics: t,
            vocab: vec![],
            phi: vec![],
            theta: regions.iter().map(|(r, q)| (r.to_string(), q.clone())).collect(),
            topic_labels: vec![String::new(); t],
        }
    }

    #[test]
    fn identical_sequences_cost_nothing() {
        let a = vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![1.0, 0.0]];
        let r = distance_ordered(&a, &a, MatchWeights::default()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.matched, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(distance_unordered(&a, &a, MatchWeights::default()).unwrap().cost, 0.0);
    }

    #[test]
    fn empty_side_costs_norms() {
        let a = vec![vec![1.0, 0.0]];
        let b: Vec<Vec<f64>> = vec![];
        let r = distance_ordered(&a, &b, MatchWeights::default()).unwrap();
        assert_eq!(r.cost, 1.0);
        assert_eq!(r.unmatched_a, vec![0]);
    }

    #[test]
    fn crossing_pairs() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let b = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let w = MatchWeights::default();
        let ordered = distance_ordered(&a, &b, w).unwrap();
        assert!((ordered.cost - 2.0).abs() < 1e-12);
        assert_eq!(ordered.matched.len(), 1);
        let unordered = distance_unordered(&a, &b, w).unwrap();
        assert!(unordered.cost.abs() < 1e-12);
        assert_eq!(unordered.matched, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = vec![vec![1.0, 0.0]];
        let b = vec![vec![1.0, 0.0, 0.0]];
        assert_eq!(
            distance_ordered(&a, &b, MatchWeights::default()).unwrap_err(),
            TrajOpsError::DimensionMismatch(2, 3)
        );
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&cost);
        let total: f64 = (0..3).map(|i| cost[i][a[i]]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn stopover_runs() {
        let t = traj(&[("A", 36_000), ("A", 43_200)]);
        let s = stopovers(&t);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].duration, 7200);

        let t = traj(&[("A", 0), ("B", 10), ("A", 20)]);
        let s = stopovers(&t);
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|s| s.duration == 0));

        let t = traj(&[
            ("A", 0),
            ("A", 60),
            ("A", 120),
            ("B", 180),
            ("B", 300),
            ("C", 400),
            ("C", 401),
            ("C", 500),
            ("A", 600),
            ("A", 900),
        ]);
        let got: Vec<(String, i64)> = stopovers(&t).into_iter().map(|s| (s.region_id, s.duration)).collect();
        assert_eq!(
            got,
            vec![("A".into(), 120), ("B".into(), 120), ("C".into(), 100), ("A".into(), 300)]
        );
    }

    #[test]
    fn filter_thresholds() {
        let m = model(&[
            ("R", vec![0.8, 0.2]),
            ("S", vec![0.3, 0.7]),
            ("M", vec![0.5, 0.5]),
        ]);
        let ts = vec![
            traj(&[("R", 0), ("R", 3600)]),
            traj(&[("S", 0), ("S", 3600)]),
            traj(&[("R", 0), ("S", 10)]),
            traj(&[("M", 0), ("R", 100), ("R", 200)]),
            traj(&[("S", 0), ("M", 100)]),
        ];
        let all = FilterPredicate {
            topic_index: 0,
            min_probability: 0.0,
            min_stopover_s: 0,
            window: TimeWindow::UNBOUNDED,
        };
        assert_eq!(filter_trajectories(&ts, &m, &all).unwrap().len(), 5);

        let residential = FilterPredicate {
            min_probability: 0.7,
            min_stopover_s: 60,
            ..all
        };
        let kept: Vec<usize> = filter_trajectories(&ts, &m, &residential)
            .unwrap()
            .iter()
            .map(|t| ts.iter().position(|x| std::ptr::eq(x, *t)).unwrap())
            .collect();
        assert_eq!(kept, vec![0, 3]);

        let market = FilterPredicate {
            min_stopover_s: 7200,
            ..all
        };
        assert!(filter_trajectories(&ts, &m, &market).unwrap().is_empty());

        let bad = FilterPredicate { topic_index: 2, ..all };
        assert!(matches!(
            filter_trajectories(&ts, &m, &bad),
            Err(TrajOpsError::BadTopicIndex { .. })
        ));
    }

    #[test]
    fn home_work_rules() {
        let m = model(&[("H", vec![1.0, 0.0]), ("W", vec![0.0, 1.0])]);
        let hours = HomeWorkHours::default();
        let day = 1_389_312_000; // 2014-01-10 00:00 UTC
        let commuter = traj(&[
            ("H", day + 3600),
            ("H", day + 5 * 3600),
            ("W", day + 10 * 3600),
            ("W", day + 15 * 3600),
            ("H", day + 21 * 3600),
        ]);
        let hw = extract_home_work(&commuter, &m, &hours);
        assert_eq!(hw.home.as_deref(), Some("H"));
        assert_eq!(hw.work.as_deref(), Some("W"));
        assert_eq!(hw.feature, vec![1.0, 0.0, 0.0, 1.0]);

        let daytime = traj(&[("W", day + 10 * 3600)]);
        let hw = extract_home_work(&daytime, &m, &hours);
        assert_eq!(hw.home, None);
        assert_eq!(&hw.feature[..2], &[0.0, 0.0]);

        let single = traj(&[("H", day + 3600), ("H", day + 10 * 3600)]);
        let hw = extract_home_work(&single, &m, &hours);
        assert_eq!(hw.home.as_deref(), Some("H"));
        assert_eq!(hw.work, None);
    }

    #[test]
    fn kmeans_cases() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0]];
        let r = kmeans(&pts, 3, 1, 50).unwrap();
        assert_eq!(*r.objective.last().unwrap(), 0.0);
        let mut a = r.assignments.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), 3);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut blobs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let c = if i % 2 == 0 { 0.0 } else { 20.0 };
            blobs.push(vec![c + rng.random::<f64>(), c + rng.random::<f64>()]);
            labels.push(i % 2);
        }
        let r = kmeans(&blobs, 2, 9, 100).unwrap();
        let flip = r.assignments[0] != labels[0];
        for (a, l) in r.assignments.iter().zip(&labels) {
            assert_eq!(*a, if flip { 1 - l } else { *l });
        }
        assert_eq!(r, kmeans(&blobs, 2, 9, 100).unwrap());
        assert!(r.objective.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(matches!(kmeans(&blobs, 61, 0, 10), Err(TrajOpsError::KTooLarge { .. })));
    }
}
