//! Natural-language query parsing: word typing, temporal windows, and
//! ordered spatial keyword groups.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::docgen::tokenize;
use crate::model::{day_start, seconds_of_day, TimeWindow, SECONDS_PER_DAY};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NlqError {
    #[error("query sentence is empty")]
    EmptySentence,
    #[error("cannot parse date or time word {0:?}")]
    UnparsableDate(String),
}

impl NlqError {
    pub fn name(&self) -> &'static str {
        match self {
            NlqError::EmptySentence => "EmptySentence",
            NlqError::UnparsableDate(_) => "UnparsableDate",
        }
    }
}

/// Word-type dictionaries. Temporal entries map a word to `[start_hour, end_hour)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionaries {
    pub conjunctions: Vec<String>,
    pub temporal: BTreeMap<String, [u32; 2]>,
}

impl Default for Dictionaries {
    fn default() -> Self {
        let conjunctions = [
            "query",
            "trajectories",
            "trajectory",
            "that",
            "the",
            "of",
            "pass",
            "passed",
            "through",
            "stay",
            "during",
            "after",
            "before",
            "and",
            "or",
            "from",
            "to",
            "in",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let temporal = [("morning", [6, 9]), ("noon", [11, 14]), ("evening", [18, 24])]
            .into_iter()
            .map(|(w, h)| (w.to_string(), h))
            .collect();
        Dictionaries {
            conjunctions,
            temporal,
        }
    }
}

impl Dictionaries {
    pub fn is_conjunction(&self, word: &str) -> bool {
        self.conjunctions.iter().any(|c| c == word)
    }

    pub fn day_part(&self, word: &str) -> Option<DayPart> {
        self.temporal.get(word).map(|[start, end]| DayPart {
            word: word.to_string(),
            start: i64::from(*start) * 3600,
            end: i64::from(*end) * 3600,
        })
    }

    /// The dictionary word whose daily window contains `second_of_day`.
    pub fn time_word(&self, second_of_day: i64) -> Option<&str> {
        self.temporal
            .iter()
            .find(|(_, [s, e])| {
                i64::from(*s) * 3600 <= second_of_day && second_of_day < i64::from(*e) * 3600
            })
            .map(|(w, _)| w.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordKind {
    Conjunction,
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedWord {
    pub text: String,
    pub kind: WordKind,
}

/// A daily time-of-day window `[start, end)` in seconds after midnight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayPart {
    pub word: String,
    pub start: i64,
    pub end: i64,
}

impl DayPart {
    pub fn contains(&self, ts: i64) -> bool {
        let s = seconds_of_day(ts);
        self.start <= s && s < self.end
    }

    pub fn on(&self, date: NaiveDate) -> TimeWindow {
        let d = day_start(date);
        TimeWindow {
            start: d + self.start,
            end: d + self.end,
        }
    }
}

/// Parsed temporal constraint.
///
/// `windows` are sorted and disjoint. `daily` is non-empty only when
/// day-part words appear without a date, and then restricts every day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalConstraint {
    pub windows: Vec<TimeWindow>,
    pub daily: Vec<DayPart>,
}

impl TemporalConstraint {
    pub fn unbounded() -> Self {
        TemporalConstraint {
            windows: vec![TimeWindow::UNBOUNDED],
            daily: Vec::new(),
        }
    }

    pub fn admits(&self, ts: i64) -> bool {
        self.windows.iter().any(|w| w.contains(ts))
            && (self.daily.is_empty() || self.daily.iter().any(|d| d.contains(ts)))
    }

    /// Absolute windows covering `span`, with daily parts materialised per day.
    pub fn concrete_windows(&self, span: TimeWindow) -> Vec<TimeWindow> {
        let clipped: Vec<TimeWindow> = self
            .windows
            .iter()
            .filter_map(|w| w.intersect(&span))
            .collect();
        if self.daily.is_empty() {
            return clipped;
        }
        let mut out = Vec::new();
        for w in clipped {
            let first = w.start.div_euclid(SECONDS_PER_DAY);
            let last = (w.end - 1).div_euclid(SECONDS_PER_DAY);
            for day in first..=last {
                for part in &self.daily {
                    let dw = TimeWindow {
                        start: day * SECONDS_PER_DAY + part.start,
                        end: day * SECONDS_PER_DAY + part.end,
                    };
                    if let Some(x) = dw.intersect(&w) {
                        out.push(x);
                    }
                }
            }
        }
        normalize_windows(out)
    }
}

/// Sorts and merges overlapping or touching windows.
pub fn normalize_windows(mut windows: Vec<TimeWindow>) -> Vec<TimeWindow> {
    windows.sort();
    let mut out: Vec<TimeWindow> = Vec::with_capacity(windows.len());
    for w in windows {
        match out.last_mut() {
            Some(last) if w.start <= last.end => last.end = last.end.max(w.end),
            _ => out.push(w),
        }
    }
    out
}

fn iso_date_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(\d{4})-(\d{1,2})-(\d{1,2})\b").expect("valid regex"))
}

fn month_date_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b(january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sept|sep|oct|nov|dec)\.?\s+(\d{1,2}),?\s+(\d{4})\b",
        )
        .expect("valid regex")
    })
}

fn month_number(name: &str) -> Option<u32> {
    let n = match &name.to_lowercase()[..3] {
        "jan" => 1,
        "feb" => 2,
        "mar" => 3,
        "apr" => 4,
        "may" => 5,
        "jun" => 6,
        "jul" => 7,
        "aug" => 8,
        "sep" => 9,
        "oct" => 10,
        "nov" => 11,
        "dec" => 12,
        _ => return None,
    };
    Some(n)
}

/// Parses `YYYY-MM-DD`, `Mon. D YYYY` or `Month D, YYYY`.
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    if let Some(c) = iso_date_re().captures(text) {
        if c.get(0)?.as_str().len() == text.len() {
            return NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?);
        }
    }
    if let Some(c) = month_date_re().captures(text) {
        if c.get(0)?.as_str().len() == text.len() {
            return NaiveDate::from_ymd_opt(
                c[3].parse().ok()?,
                month_number(&c[1])?,
                c[2].parse().ok()?,
            );
        }
    }
    None
}

/// Byte spans of date expressions, in order, non-overlapping.
fn date_spans(sentence: &str) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = iso_date_re()
        .find_iter(sentence)
        .chain(month_date_re().find_iter(sentence))
        .map(|m| (m.start(), m.end()))
        .collect();
    spans.sort();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for s in spans {
        if out.last().is_none_or(|l| s.0 >= l.1) {
            out.push(s);
        }
    }
    out
}

/// Splits a sentence into typed words.
///
/// Date expressions stay whole. `overrides` maps a lowercased word to a
/// user-chosen kind and wins over the dictionaries. Unknown words are spatial.
pub fn classify_words(
    sentence: &str,
    dict: &Dictionaries,
    overrides: &HashMap<String, WordKind>,
) -> Result<Vec<TypedWord>, NlqError> {
    let mut words = Vec::new();
    let mut cursor = 0;
    let classify = |tok: String, default: WordKind| {
        let kind = overrides.get(&tok).copied().unwrap_or(default);
        TypedWord { text: tok, kind }
    };
    let plain = |text: &str, words: &mut Vec<TypedWord>| {
        for tok in tokenize(text) {
            let kind = if dict.is_conjunction(&tok) {
                WordKind::Conjunction
            } else if dict.temporal.contains_key(&tok) {
                WordKind::Temporal
            } else {
                WordKind::Spatial
            };
            words.push(classify(tok, kind));
        }
    };
    for (start, end) in date_spans(sentence) {
        plain(&sentence[cursor..start], &mut words);
        let text = sentence[start..end].to_string();
        let kind = overrides
            .get(&text.to_lowercase())
            .copied()
            .unwrap_or(WordKind::Temporal);
        words.push(TypedWord { text, kind });
        cursor = end;
    }
    plain(&sentence[cursor..], &mut words);
    if words.is_empty() {
        return Err(NlqError::EmptySentence);
    }
    Ok(words)
}

pub fn parse_temporal(words: &[TypedWord], dict: &Dictionaries) -> Result<TemporalConstraint, NlqError> {
    let mut dates = Vec::new();
    let mut parts = Vec::new();
    for w in words.iter().filter(|w| w.kind == WordKind::Temporal) {
        if let Some(part) = dict.day_part(&w.text.to_lowercase()) {
            if !parts.contains(&part) {
                parts.push(part);
            }
        } else if let Some(date) = parse_date(&w.text) {
            dates.push(date);
        } else {
            return Err(NlqError::UnparsableDate(w.text.clone()));
        }
    }
    dates.sort();
    dates.dedup();
    parts.sort_by_key(|p| (p.start, p.end));
    if dates.is_empty() {
        return Ok(TemporalConstraint {
            windows: vec![TimeWindow::UNBOUNDED],
            daily: parts,
        });
    }
    let mut windows = Vec::new();
    for date in dates {
        if parts.is_empty() {
            let d = day_start(date);
            windows.push(TimeWindow {
                start: d,
                end: d + SECONDS_PER_DAY,
            });
        } else {
            windows.extend(parts.iter().map(|p| p.on(date)));
        }
    }
    Ok(TemporalConstraint {
        windows: normalize_windows(windows),
        daily: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combinator {
    #[default]
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialGroup {
    pub keywords: Vec<String>,
    /// Visiting order. Groups sharing an index are unordered relative to
    /// each other; a smaller index must be visited strictly earlier.
    pub order_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDefaults {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    /// Preferred topic mix; empty means no preference.
    pub topic_weights: Vec<f64>,
}

impl Default for QueryDefaults {
    fn default() -> Self {
        QueryDefaults {
            alpha: 0.6,
            beta: 0.4,
            k: 10,
            topic_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryConstraints {
    pub words: Vec<TypedWord>,
    pub windows: Vec<TimeWindow>,
    pub daily: Vec<DayPart>,
    pub groups: Vec<SpatialGroup>,
    pub combinator: Combinator,
    pub topic_weights: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
}

impl QueryConstraints {
    pub fn temporal(&self) -> TemporalConstraint {
        TemporalConstraint {
            windows: self.windows.clone(),
            daily: self.daily.clone(),
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.groups
            .windows(2)
            .any(|w| w[0].order_index != w[1].order_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    And,
    Or,
    Before,
    After,
}

pub fn extract_constraints(
    sentence: &str,
    dict: &Dictionaries,
    defaults: &QueryDefaults,
    overrides: &HashMap<String, WordKind>,
) -> Result<QueryConstraints, NlqError> {
    let words = classify_words(sentence, dict, overrides)?;
    let temporal = parse_temporal(&words, dict)?;

    // Spatial runs and the strongest relation word seen between consecutive runs.
    let mut runs: Vec<Vec<String>> = Vec::new();
    let mut relations: Vec<Relation> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut pending = Relation::And;
    for w in &words {
        if w.kind == WordKind::Spatial {
            if current.is_empty() && !runs.is_empty() {
                relations.push(pending);
                pending = Relation::And;
            }
            current.push(w.text.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            runs.push(std::mem::take(&mut current));
        }
        if w.kind == WordKind::Conjunction && !runs.is_empty() {
            pending = match (w.text.to_lowercase().as_str(), pending) {
                ("before", _) => Relation::Before,
                ("after", _) => Relation::After,
                ("or", Relation::And) => Relation::Or,
                _ => pending,
            };
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }

    let mut ranks = vec![0i64; runs.len()];
    for (i, rel) in relations.iter().enumerate() {
        ranks[i + 1] = match rel {
            Relation::Before => ranks[i] + 1,
            Relation::After => ranks[i] - 1,
            Relation::And | Relation::Or => ranks[i],
        };
    }
    let min_rank = ranks.iter().copied().min().unwrap_or(0);
    let mut groups: Vec<(i64, usize, Vec<String>)> = runs
        .into_iter()
        .enumerate()
        .map(|(pos, kw)| (ranks[pos] - min_rank, pos, kw))
        .collect();
    groups.sort_by_key(|(rank, pos, _)| (*rank, *pos));

    let combinator = if relations.contains(&Relation::Or) {
        Combinator::Or
    } else {
        Combinator::And
    };
    Ok(QueryConstraints {
        words,
        windows: temporal.windows,
        daily: temporal.daily,
        groups: groups
            .into_iter()
            .map(|(rank, _, keywords)| SpatialGroup {
                keywords,
                order_index: rank as usize,
            })
            .collect(),
        combinator,
        topic_weights: defaults.topic_weights.clone(),
        alpha: defaults.alpha,
        beta: defaults.beta,
        k: defaults.k.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(sentence: &str) -> Vec<TypedWord> {
        classify_words(sentence, &Dictionaries::default(), &HashMap::new()).unwrap()
    }

    fn of_kind(ws: &[TypedWord], kind: WordKind) -> Vec<String> {
        ws.iter()
            .filter(|w| w.kind == kind)
            .map(|w| w.text.clone())
            .collect()
    }

    fn ts(date: &str, h: i64) -> i64 {
        day_start(NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap()) + h * 3600
    }

    fn constraints(sentence: &str) -> QueryConstraints {
        extract_constraints(
            sentence,
            &Dictionaries::default(),
            &QueryDefaults::default(),
            &HashMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn students_sentence_typing() {
        let ws = words("Query trajectories of students during Jan. 10 2014");
        assert_eq!(of_kind(&ws, WordKind::Spatial), ["students"]);
        assert_eq!(of_kind(&ws, WordKind::Temporal), ["Jan. 10 2014"]);
        assert_eq!(
            of_kind(&ws, WordKind::Conjunction),
            ["query", "trajectories", "of", "during"]
        );
    }

    #[test]
    fn single_words() {
        assert_eq!(words("morning")[0].kind, WordKind::Temporal);
        assert_eq!(words("xyzzy")[0].kind, WordKind::Spatial);
        assert_eq!(
            classify_words("  ,. ", &Dictionaries::default(), &HashMap::new()),
            Err(NlqError::EmptySentence)
        );
    }

    #[test]
    fn overrides_win() {
        let mut ov = HashMap::new();
        ov.insert("through".to_string(), WordKind::Spatial);
        let ws = classify_words("pass through", &Dictionaries::default(), &ov).unwrap();
        assert_eq!(ws[1].kind, WordKind::Spatial);
    }

    #[test]
    fn dictionary_windows_are_exact() {
        let d = Dictionaries::default();
        let get = |w: &str| d.day_part(w).map(|p| (p.start, p.end));
        assert_eq!(get("morning"), Some((6 * 3600, 9 * 3600)));
        assert_eq!(get("noon"), Some((11 * 3600, 14 * 3600)));
        assert_eq!(get("evening"), Some((18 * 3600, 24 * 3600)));
        assert_eq!(get("night"), None);
        assert_eq!(d.time_word(7 * 3600 + 1800), Some("morning"));
        assert_eq!(d.time_word(9 * 3600), None);
    }

    #[test]
    fn date_plus_day_part_intersects() {
        let c = constraints("passing train station during [morning Jan. 14 2014]");
        assert_eq!(
            c.windows,
            vec![TimeWindow::new(ts("2014-01-14", 6), ts("2014-01-14", 9)).unwrap()]
        );
        assert!(c.daily.is_empty());
    }

    #[test]
    fn lone_day_part_is_daily() {
        let t = parse_temporal(&words("evening"), &Dictionaries::default()).unwrap();
        assert_eq!(t.windows, vec![TimeWindow::UNBOUNDED]);
        assert_eq!(t.daily.len(), 1);
        assert!(t.admits(ts("2014-01-10", 18)));
        assert!(!t.admits(ts("2014-01-10", 17)));
        let span = TimeWindow::new(ts("2014-01-10", 0), ts("2014-01-12", 0)).unwrap();
        assert_eq!(
            t.concrete_windows(span),
            vec![
                TimeWindow::new(ts("2014-01-10", 18), ts("2014-01-11", 0)).unwrap(),
                TimeWindow::new(ts("2014-01-11", 18), ts("2014-01-12", 0)).unwrap(),
            ]
        );
    }

    #[test]
    fn no_temporal_word_is_unbounded() {
        let t = parse_temporal(&words("pass the park"), &Dictionaries::default()).unwrap();
        assert_eq!(t, TemporalConstraint::unbounded());
    }

    #[test]
    fn date_formats() {
        let want = NaiveDate::from_ymd_opt(2014, 1, 25);
        assert_eq!(parse_date("2014-01-25"), want);
        assert_eq!(parse_date("2014-1-25"), want);
        assert_eq!(parse_date("Jan. 25 2014"), want);
        assert_eq!(parse_date("January 25, 2014"), want);
        assert_eq!(parse_date("jan 25 2014"), want);
        let err = parse_temporal(&words("during Feb. 30 2014"), &Dictionaries::default());
        assert_eq!(err, Err(NlqError::UnparsableDate("Feb. 30 2014".into())));
    }

    #[test]
    fn ordered_groups_with_one_day_window() {
        let c = constraints(
            "Query trajectories passed through Jiangxin island before Wuhua Building during January 25, 2014",
        );
        let kws: Vec<(Vec<String>, usize)> = c
            .groups
            .iter()
            .map(|g| (g.keywords.clone(), g.order_index))
            .collect();
        assert_eq!(
            kws,
            vec![
                (vec!["jiangxin".into(), "island".into()], 0),
                (vec!["wuhua".into(), "building".into()], 1),
            ]
        );
        assert_eq!(
            c.windows,
            vec![TimeWindow::new(ts("2014-01-25", 0), ts("2014-01-26", 0)).unwrap()]
        );
        assert!(c.is_ordered());
    }

    #[test]
    fn before_and_after_are_mirror_images() {
        let a = constraints("pass park before museum");
        let b = constraints("pass museum after park");
        assert_eq!(a.groups, b.groups);
        assert_eq!(a.combinator, b.combinator);
        assert_eq!(a.windows, b.windows);
    }

    #[test]
    fn and_or_combinators() {
        let c = constraints("pass A and pass B");
        assert_eq!(c.groups.len(), 2);
        assert_eq!(c.combinator, Combinator::And);
        assert!(!c.is_ordered());
        assert_eq!(constraints("park or museum").combinator, Combinator::Or);
        assert!(constraints("query the trajectories").groups.is_empty());
    }
}
