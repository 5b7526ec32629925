//! POI relevance: Okapi BM25 over POI documents, enriched with the cosine
//! between the POI's regional topic mix and the user's preferred mix.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::docgen::PoiDocument;
use crate::embed::{EmbeddingSpace, DEFAULT_MIN_SIM, DEFAULT_NEIGHBORS};
use crate::nlq::QueryConstraints;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RelevanceError {
    #[error("query has no spatial constraint")]
    NoSpatialConstraint,
}

impl RelevanceError {
    pub fn name(&self) -> &'static str {
        "NoSpatialConstraint"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k: f64,
    pub b: f64,
    pub avgdl: f64,
    /// Number of POI documents.
    pub m: usize,
}

impl Bm25Params {
    pub fn for_corpus(docs: &[PoiDocument]) -> Bm25Params {
        let m = docs.len().max(1);
        let total: usize = docs.iter().map(PoiDocument::len).sum();
        let avgdl = if total == 0 { 1.0 } else { total as f64 / m as f64 };
        Bm25Params {
            k: 1.2,
            b: 0.75,
            avgdl,
            m,
        }
    }
}

/// `max(0, ln((m - M + 0.5) / (M + 0.5)))`.
pub fn idf(m: usize, containing: usize) -> f64 {
    let (m, mw) = (m as f64, containing as f64);
    ((m - mw + 0.5) / (mw + 0.5)).ln().max(0.0)
}

/// One term's BM25 contribution with length-relative term frequency
/// `TF = f / |D|`.
pub fn bm25_term(term_count: usize, doc_len: usize, idf: f64, params: &Bm25Params) -> f64 {
    if term_count == 0 || doc_len == 0 {
        return 0.0;
    }
    let tf = term_count as f64 / doc_len as f64;
    let norm = 1.0 - params.b + params.b * doc_len as f64 / params.avgdl;
    idf * tf * (params.k + 1.0) / (tf + params.k * norm)
}

/// Raw cosine; 0 when either vector is all-zero or the lengths differ.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `alpha·score + beta·cos(region_topics, preferred_topics)`.
pub fn enriched_score(score: f64, region_topics: &[f64], preferred_topics: &[f64], alpha: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return alpha * score;
    }
    alpha * score + beta * cosine(region_topics, preferred_topics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedKeyword {
    pub word: String,
    pub weight: f64,
    /// The constraint word this one augments; `None` for constraint words.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl WeightedKeyword {
    pub fn original(word: &str) -> Self {
        WeightedKeyword {
            word: word.to_string(),
            weight: 1.0,
            source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoi {
    pub poi_id: String,
    pub region_id: String,
    /// Topic-enriched score used for ranking.
    pub score: f64,
    /// Plain BM25 sum before enrichment.
    pub base_score: f64,
    pub keyword_hits: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub neighbors: usize,
    pub min_sim: f64,
    /// Neighbor contributions scaled by their similarity (otherwise weight 1).
    pub weighted: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            neighbors: DEFAULT_NEIGHBORS,
            min_sim: DEFAULT_MIN_SIM,
            weighted: true,
        }
    }
}

/// Constraint words followed by their embedding neighbors, deduplicated
/// keeping the highest weight.
pub fn augment_keywords(
    keywords: &[String],
    space: Option<&EmbeddingSpace>,
    config: &AugmentConfig,
) -> Vec<WeightedKeyword> {
    let mut out: Vec<WeightedKeyword> = Vec::new();
    let push = |kw: WeightedKeyword, out: &mut Vec<WeightedKeyword>| {
        match out.iter_mut().find(|k| k.word == kw.word) {
            Some(existing) if existing.weight < kw.weight => *existing = kw,
            Some(_) => {}
            None => out.push(kw),
        }
    };
    for kw in keywords {
        push(WeightedKeyword::original(kw), &mut out);
    }
    if let Some(space) = space {
        for kw in keywords {
            let Ok(neighbors) = space.neighbors(kw, config.neighbors, config.min_sim) else {
                continue;
            };
            for (word, sim) in neighbors {
                let weight = if config.weighted { sim } else { 1.0 };
                push(
                    WeightedKeyword {
                        word,
                        weight,
                        source: Some(kw.clone()),
                    },
                    &mut out,
                );
            }
        }
    }
    out
}

/// POI documents with their collection statistics and region topic vectors.
#[derive(Debug, Clone)]
pub struct PoiCorpus {
    docs: Vec<PoiDocument>,
    /// Per document: term -> count.
    term_counts: Vec<HashMap<String, usize>>,
    doc_freq: HashMap<String, usize>,
    regions: Vec<String>,
    params: Bm25Params,
}

impl PoiCorpus {
    /// `regions[i]` is the region of `docs[i]`.
    pub fn new(docs: Vec<PoiDocument>, regions: Vec<String>) -> PoiCorpus {
        assert_eq!(docs.len(), regions.len());
        let params = Bm25Params::for_corpus(&docs);
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let term_counts: Vec<HashMap<String, usize>> = docs
            .iter()
            .map(|d| {
                let mut tc: HashMap<String, usize> = HashMap::new();
                for t in &d.tokens {
                    *tc.entry(t.clone()).or_insert(0) += 1;
                }
                for t in tc.keys() {
                    *doc_freq.entry(t.clone()).or_insert(0) += 1;
                }
                tc
            })
            .collect();
        PoiCorpus {
            docs,
            term_counts,
            doc_freq,
            regions,
            params,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn set_k(&mut self, k: f64) {
        self.params.k = k;
    }

    pub fn docs(&self) -> &[PoiDocument] {
        &self.docs
    }

    pub fn region(&self, i: usize) -> &str {
        &self.regions[i]
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.params.m, self.doc_freq.get(term).copied().unwrap_or(0))
    }

    /// Per-keyword contributions `weight·R(w, D)` for document `i`.
    pub fn keyword_hits(&self, i: usize, keywords: &[WeightedKeyword]) -> Vec<(String, f64)> {
        let len = self.docs[i].len();
        keywords
            .iter()
            .filter_map(|kw| {
                let f = self.term_counts[i].get(&kw.word).copied().unwrap_or(0);
                let r = bm25_term(f, len, self.idf(&kw.word), &self.params);
                (r != 0.0).then(|| (kw.word.clone(), kw.weight * r))
            })
            .collect()
    }

    /// Weighted BM25 sum over `keywords`.
    pub fn score(&self, i: usize, keywords: &[WeightedKeyword]) -> f64 {
        self.keyword_hits(i, keywords).iter().map(|(_, c)| c).sum()
    }

    /// Scores every document, keeping those with a positive keyword score,
    /// ordered by enriched score descending then POI id; at most `k`.
    pub fn top_k(
        &self,
        keywords: &[WeightedKeyword],
        region_topics: &dyn Fn(&str) -> Option<Vec<f64>>,
        preferred: &[f64],
        alpha: f64,
        beta: f64,
        k: usize,
    ) -> Vec<ScoredPoi> {
        let mut scored: Vec<ScoredPoi> = (0..self.docs.len())
            .filter_map(|i| {
                let hits = self.keyword_hits(i, keywords);
                let base: f64 = hits.iter().map(|(_, c)| c).sum();
                if base <= 0.0 {
                    return None;
                }
                let region = &self.regions[i];
                let topics = region_topics(region).unwrap_or_default();
                Some(ScoredPoi {
                    poi_id: self.docs[i].poi_id.clone(),
                    region_id: region.clone(),
                    score: enriched_score(base, &topics, preferred, alpha, beta),
                    base_score: base,
                    keyword_hits: hits,
                })
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.poi_id.cmp(&b.poi_id)));
        scored.truncate(k);
        scored
    }
}

/// Per-group outcome of POI selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPois {
    pub keywords: Vec<WeightedKeyword>,
    pub pois: Vec<ScoredPoi>,
}

/// Top-K POIs for every spatial group of `constraints`.
pub fn top_k_pois(
    constraints: &QueryConstraints,
    space: Option<&EmbeddingSpace>,
    region_topics: &dyn Fn(&str) -> Option<Vec<f64>>,
    corpus: &PoiCorpus,
    augment: &AugmentConfig,
) -> Result<Vec<GroupPois>, RelevanceError> {
    if constraints.groups.is_empty() {
        return Err(RelevanceError::NoSpatialConstraint);
    }
    Ok(constraints
        .groups
        .iter()
        .map(|g| {
            let keywords = augment_keywords(&g.keywords, space, augment);
            let pois = corpus.top_k(
                &keywords,
                region_topics,
                &constraints.topic_weights,
                constraints.alpha,
                constraints.beta,
                constraints.k,
            );
            GroupPois { keywords, pois }
        })
        .collect())
}

/// Region topic lookup backed by a plain map; handy for tests and examples.
pub fn topics_from_map(map: BTreeMap<String, Vec<f64>>) -> impl Fn(&str) -> Option<Vec<f64>> {
    move |region| map.get(region).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlq::{Combinator, SpatialGroup};

    #[test]
    fn idf_examples() {
        assert!((idf(100, 10) - (90.5f64 / 10.5).ln()).abs() < 1e-12);
        assert!((idf(100, 10) - 2.1539).abs() < 1e-4);
        assert_eq!(idf(3, 2), 0.0);
        assert_eq!(idf(5, 5), 0.0);
    }

    #[test]
    fn idf_non_increasing() {
        for m in [1usize, 2, 7, 50] {
            for mw in 0..m {
                assert!(idf(m, mw + 1) <= idf(m, mw));
            }
        }
    }

    #[test]
    fn bm25_term_examples() {
        let p = Bm25Params {
            k: 1.2,
            b: 0.75,
            avgdl: 10.0,
            m: 100,
        };
        assert_eq!(bm25_term(0, 10, 2.1539, &p), 0.0);
        assert!((bm25_term(2, 10, 2.1539, &p) - 0.6770).abs() < 1e-3);
        assert!((bm25_term(2, 20, 2.1539, &p) - 0.2154).abs() < 1e-3);
        assert_eq!(bm25_term(1, 0, 2.0, &p), 0.0);
    }

    #[test]
    fn enrichment_examples() {
        assert_eq!(enriched_score(0.5, &[1.0, 0.0], &[0.0, 1.0], 0.6, 0.0), 0.6 * 0.5);
        assert!((enriched_score(0.5, &[0.3, 0.7], &[0.3, 0.7], 0.6, 0.4) - 0.7).abs() < 1e-9);
        assert_eq!(enriched_score(0.5, &[0.3, 0.7], &[0.0, 0.0], 0.6, 0.4), 0.6 * 0.5);
    }

    fn corpus() -> PoiCorpus {
        let docs = [
            ("p1", "wz train station"),
            ("p2", "train museum"),
            ("p3", "central bus station"),
            ("p4", "noodle house"),
            ("p5", "city library"),
            ("p6", "river park"),
            ("p7", "harbor hotel"),
            ("p8", "art gallery"),
        ]
        .iter()
        .map(|(id, text)| PoiDocument {
            poi_id: id.to_string(),
            tokens: crate::docgen::tokenize(text),
        })
        .collect();
        let regions = (0..8).map(|i| format!("r{}", i % 2 + 1)).collect();
        PoiCorpus::new(docs, regions)
    }

    fn constraints(groups: &[&[&str]], k: usize) -> QueryConstraints {
        QueryConstraints {
            words: Vec::new(),
            windows: Vec::new(),
            daily: Vec::new(),
            groups: groups
                .iter()
                .map(|g| SpatialGroup {
                    keywords: g.iter().map(|s| s.to_string()).collect(),
                    order_index: 0,
                })
                .collect(),
            combinator: Combinator::And,
            topic_weights: Vec::new(),
            alpha: 1.0,
            beta: 0.0,
            k,
        }
    }

    #[test]
    fn top_k_basics() {
        let c = corpus();
        let none = |_: &str| None;
        let groups = top_k_pois(&constraints(&[&["train", "station"]], 10), None, &none, &c, &AugmentConfig::default()).unwrap();
        let ids: Vec<&str> = groups[0].pois.iter().map(|p| p.poi_id.as_str()).collect();
        assert_eq!(ids, ["p1", "p2", "p3"]);
        for p in &groups[0].pois {
            let sum: f64 = p.keyword_hits.iter().map(|h| h.1).sum();
            assert!((sum - p.base_score).abs() < 1e-9);
        }
        assert_eq!(
            top_k_pois(&constraints(&[], 3), None, &none, &c, &AugmentConfig::default()),
            Err(RelevanceError::NoSpatialConstraint)
        );
        let two = top_k_pois(&constraints(&[&["train"], &["noodle"]], 1), None, &none, &c, &AugmentConfig::default()).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two[1].pois[0].poi_id, "p4");
    }

    #[test]
    fn augmentation_weights_by_similarity() {
        let space = EmbeddingSpace::from_rows(
            2,
            [("school", vec![1.0, 0.0]), ("college", vec![1.0, 0.5]), ("pizza", vec![0.0, 1.0])]
                .into_iter()
                .map(|(w, v)| (w.to_string(), v)),
        );
        let kws = augment_keywords(&["school".into()], Some(&space), &AugmentConfig::default());
        assert_eq!(kws.len(), 2);
        assert_eq!(kws[1].word, "college");
        assert!((kws[1].weight - space.sim("school", "college").unwrap()).abs() < 1e-12);
        let flat = augment_keywords(
            &["school".into()],
            Some(&space),
            &AugmentConfig {
                weighted: false,
                ..AugmentConfig::default()
            },
        );
        assert_eq!(flat[1].weight, 1.0);
        // Unknown words are kept, just not expanded.
        assert_eq!(augment_keywords(&["zzz".into()], Some(&space), &AugmentConfig::default()).len(), 1);
    }
}
