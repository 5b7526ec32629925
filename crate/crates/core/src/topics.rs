//! Regional functional topics: LDA over region documents whose words are POI
//! categories, and the per-point topic sequences derived from it.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::docgen::RegionDocument;
use crate::model::Trajectory;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopicError {
    #[error("corpus has no words")]
    EmptyCorpus,
    #[error("need at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
}

impl TopicError {
    pub fn name(&self) -> &'static str {
        match self {
            TopicError::EmptyCorpus => "EmptyCorpus",
            TopicError::TooFewTopics(_) => "TooFewTopics",
            TopicError::UnknownRegion(_) => "UnknownRegion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    pub iters: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl LdaConfig {
    /// `alpha = 50/T`, `beta = 0.01`, 1000 sweeps.
    pub fn new(topics: usize, seed: u64) -> Self {
        LdaConfig {
            topics,
            iters: 1000,
            alpha: 50.0 / topics.max(1) as f64,
            beta: 0.01,
            seed,
        }
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig::new(6, 0)
    }
}

/// Trained topic model, persisted as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    #[serde(rename = "T")]
    pub topics: usize,
    pub vocab: Vec<String>,
    /// Row-major `T × V` word distributions per topic.
    pub phi: Vec<f64>,
    pub theta: BTreeMap<String, Vec<f64>>,
    pub topic_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSemantics {
    pub region_id: String,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySemantics {
    pub trajectory_id: String,
    /// `(topic vector, timestamp)` per point.
    pub sequence: Vec<(Vec<f64>, i64)>,
}

impl TrajectorySemantics {
    pub fn vectors(&self) -> Vec<&[f64]> {
        self.sequence.iter().map(|(q, _)| q.as_slice()).collect()
    }
}

/// Count state of the collapsed sampler.
struct GibbsState {
    topics: usize,
    vocab_len: usize,
    /// `[doc][token]` word ids and topic assignments.
    words: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    topic_word: Vec<u32>,
    doc_topic: Vec<u32>,
    topic_total: Vec<u32>,
}

impl GibbsState {
    fn sweep(&mut self, rng: &mut ChaCha8Rng, alpha: f64, beta: f64, probs: &mut [f64]) {
        let t_count = self.topics;
        let v_beta = self.vocab_len as f64 * beta;
        for d in 0..self.words.len() {
            for i in 0..self.words[d].len() {
                let w = self.words[d][i];
                let old = self.z[d][i];
                self.topic_word[old * self.vocab_len + w] -= 1;
                self.doc_topic[d * t_count + old] -= 1;
                self.topic_total[old] -= 1;

                let mut acc = 0.0;
                for (t, p) in probs.iter_mut().enumerate() {
                    let tw = f64::from(self.topic_word[t * self.vocab_len + w]);
                    let dt = f64::from(self.doc_topic[d * t_count + t]);
                    let tt = f64::from(self.topic_total[t]);
                    acc += (tw + beta) / (tt + v_beta) * (dt + alpha);
                    *p = acc;
                }
                let u = rng.random::<f64>() * acc;
                let new = probs.iter().position(|&c| u < c).unwrap_or(t_count - 1);

                self.z[d][i] = new;
                self.topic_word[new * self.vocab_len + w] += 1;
                self.doc_topic[d * t_count + new] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    fn token_count(&self) -> u64 {
        self.topic_word.iter().map(|&c| u64::from(c)).sum()
    }
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    for x in row.iter_mut() {
        *x /= s;
    }
}

fn init_state(docs: &[RegionDocument], config: &LdaConfig, rng: &mut ChaCha8Rng) -> (Vec<String>, GibbsState) {
    let mut vocab: Vec<String> = docs.iter().flat_map(|d| d.words.iter().cloned()).collect();
    vocab.sort();
    vocab.dedup();
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let t = config.topics;
    let v = vocab.len();
    let mut state = GibbsState {
        topics: t,
        vocab_len: v,
        words: Vec::with_capacity(docs.len()),
        z: Vec::with_capacity(docs.len()),
        topic_word: vec![0; t * v],
        doc_topic: vec![0; docs.len() * t],
        topic_total: vec![0; t],
    };
    for (d, doc) in docs.iter().enumerate() {
        let ids: Vec<usize> = doc.words.iter().map(|w| index[w.as_str()]).collect();
        let zs: Vec<usize> = ids
            .iter()
            .map(|&w| {
                let k = rng.random_range(0..t);
                state.topic_word[k * v + w] += 1;
                state.doc_topic[d * t + k] += 1;
                state.topic_total[k] += 1;
                k
            })
            .collect();
        state.words.push(ids);
        state.z.push(zs);
    }
    (vocab, state)
}

fn estimate(docs: &[RegionDocument], vocab: Vec<String>, state: &GibbsState, config: &LdaConfig) -> TopicModel {
    let (t, v) = (config.topics, vocab.len());
    let mut phi = vec![0.0; t * v];
    for k in 0..t {
        let row = &mut phi[k * v..(k + 1) * v];
        for (w, x) in row.iter_mut().enumerate() {
            *x = f64::from(state.topic_word[k * v + w]) + config.beta;
        }
        normalize(row);
    }
    let theta = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            let mut row: Vec<f64> = (0..t)
                .map(|k| f64::from(state.doc_topic[d * t + k]) + config.alpha)
                .collect();
            normalize(&mut row);
            (doc.region_id.clone(), row)
        })
        .collect();
    let topic_labels = (0..t)
        .map(|k| {
            let row = &phi[k * v..(k + 1) * v];
            let mut order: Vec<usize> = (0..v).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            order
                .iter()
                .take(3)
                .map(|&w| vocab[w].as_str())
                .collect::<Vec<_>>()
                .join("/")
        })
        .collect();
    TopicModel {
        topics: t,
        vocab,
        phi,
        theta,
        topic_labels,
    }
}

/// Collapsed Gibbs sampling for `config.iters` sweeps; point estimates from
/// the final state with Dirichlet smoothing.
pub fn train_lda(docs: &[RegionDocument], config: &LdaConfig) -> Result<TopicModel, TopicError> {
    train_lda_observed(docs, config, |_, _| {})
}

/// As [`train_lda`], calling `observe(sweep, tokens_in_counts)` after every sweep.
pub fn train_lda_observed(
    docs: &[RegionDocument],
    config: &LdaConfig,
    mut observe: impl FnMut(usize, u64),
) -> Result<TopicModel, TopicError> {
    if config.topics < 2 {
        return Err(TopicError::TooFewTopics(config.topics));
    }
    if docs.iter().all(|d| d.words.is_empty()) {
        return Err(TopicError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (vocab, mut state) = init_state(docs, config, &mut rng);
    let mut probs = vec![0.0; config.topics];
    for sweep in 0..config.iters {
        state.sweep(&mut rng, config.alpha, config.beta, &mut probs);
        observe(sweep, state.token_count());
    }
    Ok(estimate(docs, vocab, &state, config))
}

impl TopicModel {
    pub fn phi_row(&self, topic: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.phi[topic * v..(topic + 1) * v]
    }

    /// Top `n` `(word, probability)` pairs of a topic.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<(String, f64)> {
        let row = self.phi_row(topic);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .take(n)
            .map(|w| (self.vocab[w].clone(), row[w]))
            .collect()
    }

    pub fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.topics as f64; self.topics]
    }

    pub fn region_semantics(&self, region_id: &str) -> Result<RegionSemantics, TopicError> {
        self.theta
            .get(region_id)
            .map(|q| RegionSemantics {
                region_id: region_id.to_string(),
                q: q.clone(),
            })
            .ok_or_else(|| TopicError::UnknownRegion(region_id.to_string()))
    }

    pub fn region_vector(&self, region_id: &str) -> Option<&[f64]> {
        self.theta.get(region_id).map(Vec::as_slice)
    }

    /// Registers regions that had no POIs with the uniform vector.
    pub fn with_empty_regions<'a>(mut self, region_ids: impl IntoIterator<Item = &'a str>) -> Self {
        let uniform = self.uniform();
        for id in region_ids {
            self.theta.entry(id.to_string()).or_insert_with(|| uniform.clone());
        }
        self
    }

    pub fn trajectory_semantics(&self, trajectory: &Trajectory) -> Result<TrajectorySemantics, TopicError> {
        let sequence = trajectory
            .points
            .iter()
            .map(|p| {
                self.region_vector(&p.station_id)
                    .map(|q| (q.to_vec(), p.timestamp))
                    .ok_or_else(|| TopicError::UnknownRegion(p.station_id.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(TrajectorySemantics {
            trajectory_id: trajectory.id.clone(),
            sequence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrajectoryPoint;

    fn doc(id: &str, words: &[(&str, usize)]) -> RegionDocument {
        RegionDocument {
            region_id: id.into(),
            words: words
                .iter()
                .flat_map(|(w, n)| std::iter::repeat_n(w.to_string(), *n))
                .collect(),
        }
    }

    fn sums_to_one(row: &[f64]) -> bool {
        (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && row.iter().all(|&x| x >= 0.0)
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            train_lda(&[doc("r", &[])], &LdaConfig::new(2, 0)),
            Err(TopicError::EmptyCorpus)
        );
        assert_eq!(
            train_lda(&[doc("r", &[("a", 1)])], &LdaConfig::new(1, 0)),
            Err(TopicError::TooFewTopics(1))
        );
    }

    #[test]
    fn two_word_corpus_separates() {
        let mut docs = Vec::new();
        for i in 0..20 {
            docs.push(doc(&format!("a{i}"), &[("a", 10)]));
            docs.push(doc(&format!("b{i}"), &[("b", 10)]));
        }
        let cfg = LdaConfig {
            iters: 200,
            alpha: 0.1,
            ..LdaConfig::new(2, 5)
        };
        let model = train_lda(&docs, &cfg).unwrap();
        for w in 0..model.vocab.len() {
            let best = (0..2).map(|t| model.phi_row(t)[w]).fold(0.0, f64::max);
            assert!(best >= 0.9, "{} {best}", model.vocab[w]);
        }
        for t in 0..2 {
            assert!(sums_to_one(model.phi_row(t)));
        }
        assert!(model.theta.values().all(|r| sums_to_one(r)));
    }

    #[test]
    fn restaurant_hotel_region_mix() {
        let mut docs = vec![doc("mixed", &[("restaurant", 4), ("hotel", 1)])];
        for i in 0..15 {
            docs.push(doc(&format!("r{i}"), &[("restaurant", 8)]));
            docs.push(doc(&format!("h{i}"), &[("hotel", 8)]));
        }
        let cfg = LdaConfig {
            iters: 300,
            alpha: 0.1,
            ..LdaConfig::new(2, 1)
        };
        let model = train_lda(&docs, &cfg).unwrap();
        let restaurant = model.vocab.iter().position(|w| w == "restaurant").unwrap();
        let r_topic = if model.phi_row(0)[restaurant] > model.phi_row(1)[restaurant] { 0 } else { 1 };
        let q = model.region_semantics("mixed").unwrap().q;
        assert!((q[r_topic] - 0.8).abs() <= 0.15, "{q:?}");
        assert!((q[1 - r_topic] - 0.2).abs() <= 0.15, "{q:?}");
        assert!(sums_to_one(&q));
    }

    #[test]
    fn seeded_runs_are_identical_and_conserve_tokens() {
        let docs: Vec<_> = (0..10)
            .map(|i| doc(&format!("d{i}"), &[("x", i % 3 + 1), ("y", 2), ("z", i % 2)]))
            .collect();
        let total: u64 = docs.iter().map(|d| d.words.len() as u64).sum();
        let cfg = LdaConfig {
            iters: 50,
            ..LdaConfig::new(3, 42)
        };
        let mut counts = Vec::new();
        let a = train_lda_observed(&docs, &cfg, |_, n| counts.push(n)).unwrap();
        let b = train_lda(&docs, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(counts.len(), 50);
        assert!(counts.iter().all(|&n| n == total));
        assert_eq!(a.topic_labels.len(), 3);
    }

    #[test]
    fn empty_regions_get_uniform_vectors() {
        let docs = vec![doc("full", &[("a", 3), ("b", 1)]), doc("empty", &[])];
        let model = train_lda(&docs, &LdaConfig::new(4, 0))
            .unwrap()
            .with_empty_regions(["never_seen"]);
        assert_eq!(model.region_semantics("empty").unwrap().q, vec![0.25; 4]);
        assert_eq!(model.region_semantics("never_seen").unwrap().q, vec![0.25; 4]);
        assert!(matches!(
            model.region_semantics("nope"),
            Err(TopicError::UnknownRegion(_))
        ));
    }

    #[test]
    fn trajectory_sequences() {
        let docs = vec![doc("A", &[("a", 5)]), doc("B", &[("b", 5)])];
        let model = train_lda(&docs, &LdaConfig { iters: 20, ..LdaConfig::new(2, 3) }).unwrap();
        let point = |s: &str, t: i64| TrajectoryPoint {
            station_id: s.into(),
            timestamp: t,
        };
        let t1 = Trajectory {
            id: "t".into(),
            user_id: "u".into(),
            points: vec![point("A", 10)],
        };
        let s1 = model.trajectory_semantics(&t1).unwrap();
        assert_eq!(s1.sequence, vec![(model.theta["A"].clone(), 10)]);

        let t2 = Trajectory {
            points: vec![point("B", 1), point("B", 2), point("B", 3)],
            ..t1.clone()
        };
        let s2 = model.trajectory_semantics(&t2).unwrap();
        assert_eq!(s2.sequence.len(), 3);
        assert!(s2.sequence.iter().all(|(q, _)| *q == model.theta["B"]));
        assert_eq!(s2.sequence.iter().map(|x| x.1).collect::<Vec<_>>(), [1, 2, 3]);

        let bad = Trajectory {
            points: vec![point("Z", 1)],
            ..t1
        };
        assert!(matches!(model.trajectory_semantics(&bad), Err(TopicError::UnknownRegion(_))));
    }
}
