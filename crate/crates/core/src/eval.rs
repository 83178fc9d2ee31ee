//! Ranking metrics over aggregated queries (P@K, R@K, F1@K, MAP, saved
//! words and characters) and the sparsity and overlap analyses.
//!
//! A model is scored once per query into a [`ScoredQuery`] holding the
//! full-ordering rank of every ground-truth word; every metric is then an
//! integer or harmonic count over those ranks.

use std::fmt::Write as _;

use crate::corpus::{EvalQuery, Vocabulary};
use crate::error::{Error, Result};
use crate::lm::{next_distribution, LanguageModel, Prediction, WordId};

pub const DEFAULT_BETA: f64 = 2.0 / 3.0;
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthRank {
    pub word: WordId,
    pub count: u32,
    /// 1-based position in the model's full ordering; `None` when the word
    /// has no probability mass or the model abstained.
    pub rank: Option<usize>,
    pub chars: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredQuery {
    pub recommended: bool,
    pub truths: Vec<TruthRank>,
}

impl ScoredQuery {
    pub fn new(prediction: &Prediction, query: &EvalQuery, vocab: &Vocabulary) -> Self {
        let dist = prediction.distribution();
        let truths = query
            .truths
            .iter()
            .map(|&(word, count)| TruthRank {
                word,
                count,
                rank: dist.and_then(|d| d.rank_of(word)),
                chars: vocab.char_len(word),
            })
            .collect();
        Self {
            recommended: dist.is_some(),
            truths,
        }
    }

    pub fn total(&self) -> u64 {
        self.truths.iter().map(|t| u64::from(t.count)).sum()
    }

    /// Truth instances found in the top K.
    pub fn hits(&self, k: usize) -> u64 {
        self.truths
            .iter()
            .filter(|t| t.rank.is_some_and(|r| r <= k))
            .map(|t| u64::from(t.count))
            .sum()
    }

    /// Characters of truth instances found in the top K.
    pub fn char_hits(&self, k: usize) -> u64 {
        self.truths
            .iter()
            .filter(|t| t.rank.is_some_and(|r| r <= k))
            .map(|t| u64::from(t.count) * t.chars as u64)
            .sum()
    }

    pub fn chars(&self) -> u64 {
        self.truths
            .iter()
            .map(|t| u64::from(t.count) * t.chars as u64)
            .sum()
    }

    pub fn reciprocal_rank_sum(&self) -> f64 {
        self.truths
            .iter()
            .filter_map(|t| t.rank.map(|r| f64::from(t.count) / r as f64))
            .sum()
    }
}

/// Scores every query. Contexts must be valid for the model.
pub fn score<M: LanguageModel + ?Sized>(
    model: &M,
    queries: &[EvalQuery],
    vocab: &Vocabulary,
) -> Result<Vec<ScoredQuery>> {
    queries
        .iter()
        .map(|q| Ok(ScoredQuery::new(&next_distribution(model, &q.context)?, q, vocab)))
        .collect()
}

/// Hits over K times the number of queries that received a list.
pub fn precision_at_k(scored: &[ScoredQuery], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let lists = scored.iter().filter(|s| s.recommended).count() as u64;
    if lists == 0 {
        return Err(Error::NoUsableQueries);
    }
    let hits: u64 = scored.iter().map(|s| s.hits(k)).sum();
    Ok(hits as f64 / (k as u64 * lists) as f64)
}

/// Hits over all ground-truth instances, abstentions included.
pub fn recall_at_k(scored: &[ScoredQuery], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let total: u64 = scored.iter().map(ScoredQuery::total).sum();
    if total == 0 {
        return Err(Error::NoUsableQueries);
    }
    let hits: u64 = scored.iter().map(|s| s.hits(k)).sum();
    Ok(hits as f64 / total as f64)
}

/// PR / (βP + (1−β)R), zero when both are zero.
pub fn f1_at_k(precision: f64, recall: f64, beta: f64) -> f64 {
    let denom = beta * precision + (1.0 - beta) * recall;
    if denom == 0.0 {
        0.0
    } else {
        precision * recall / denom
    }
}

/// Mean reciprocal full-ordering rank over all ground-truth instances.
pub fn mean_average_precision(scored: &[ScoredQuery]) -> Result<f64> {
    let total: u64 = scored.iter().map(ScoredQuery::total).sum();
    if total == 0 {
        return Err(Error::NoUsableQueries);
    }
    let sum: f64 = scored.iter().map(ScoredQuery::reciprocal_rank_sum).sum();
    Ok(sum / total as f64)
}

/// Share of typed words selectable from the top K; equal to recall.
pub fn saved_words(scored: &[ScoredQuery], k: usize) -> Result<f64> {
    recall_at_k(scored, k)
}

/// Share of typed characters selectable from the top K.
pub fn saved_chars(scored: &[ScoredQuery], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let total: u64 = scored.iter().map(ScoredQuery::chars).sum();
    if total == 0 {
        return Err(Error::NoUsableQueries);
    }
    let hits: u64 = scored.iter().map(|s| s.char_hits(k)).sum();
    Ok(hits as f64 / total as f64)
}

/// The comparison-table measures, as fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub p1: f64,
    pub p3: f64,
    pub p5: f64,
    pub p10: f64,
    pub r10: f64,
    pub f1: f64,
    pub map: f64,
    pub sw10: f64,
    pub sc10: f64,
    pub queries: usize,
    pub no_recommendation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Map,
    P1,
    R10,
    F1,
}

impl Objective {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Some(Self::Map),
            "p@1" | "p1" => Some(Self::P1),
            "r@10" | "r10" => Some(Self::R10),
            "f1" => Some(Self::F1),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Map => "MAP",
            Self::P1 => "P@1",
            Self::R10 => "R@10",
            Self::F1 => "F1",
        }
    }

    pub fn of(self, r: &MetricsReport) -> f64 {
        match self {
            Self::Map => r.map,
            Self::P1 => r.p1,
            Self::R10 => r.r10,
            Self::F1 => r.f1,
        }
    }
}

impl MetricsReport {
    /// Precision-based fields are 0 when the model never recommends.
    pub fn from_scored(scored: &[ScoredQuery], beta: f64) -> Result<Self> {
        let p = |k| match precision_at_k(scored, k) {
            Err(Error::NoUsableQueries) => Ok(0.0),
            other => other,
        };
        let r10 = recall_at_k(scored, DEFAULT_K)?;
        let p10 = p(DEFAULT_K)?;
        Ok(Self {
            p1: p(1)?,
            p3: p(3)?,
            p5: p(5)?,
            p10,
            r10,
            f1: f1_at_k(p10, r10, beta),
            map: mean_average_precision(scored)?,
            sw10: saved_words(scored, DEFAULT_K)?,
            sc10: saved_chars(scored, DEFAULT_K)?,
            queries: scored.len(),
            no_recommendation: scored.iter().filter(|s| !s.recommended).count(),
        })
    }

    pub fn evaluate<M: LanguageModel + ?Sized>(
        model: &M,
        queries: &[EvalQuery],
        vocab: &Vocabulary,
    ) -> Result<Self> {
        Self::from_scored(&score(model, queries, vocab)?, DEFAULT_BETA)
    }

    pub const TSV_HEADER: &'static str =
        "model\tP@1\tP@3\tP@5\tP@10\tR@10\tF1@10\tMAP\tSW@10\tSC@10\tqueries\tno_recommendation";

    pub fn tsv_row(&self, name: &str) -> String {
        format!(
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.p1,
            self.p3,
            self.p5,
            self.p10,
            self.r10,
            self.f1,
            self.map,
            self.sw10,
            self.sc10,
            self.queries,
            self.no_recommendation
        )
    }
}

/// Fixed-width table in percent: P@1, P@3, P@5, P@10, R@10, F1, MAP, SC.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:width$}", "model");
    for h in ["P@1", "P@3", "P@5", "P@10", "R@10", "F1", "MAP", "SC"] {
        let _ = write!(out, " {h:>8}");
    }
    out.push('\n');
    for (name, r) in rows {
        let pad = width - name.chars().count();
        let _ = write!(out, "{name}{:pad$}", "");
        for v in [r.p1, r.p3, r.p5, r.p10, r.r10, r.f1, r.map, r.sc10] {
            let _ = write!(out, " {:>8.3}", 100.0 * v);
        }
        out.push('\n');
    }
    out
}

/// Abstention counts of one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Bucket {
    pub queries: usize,
    pub no_recommendation: usize,
}

impl Bucket {
    pub fn rate(&self) -> Option<f64> {
        (self.queries > 0).then(|| self.no_recommendation as f64 / self.queries as f64)
    }
}

pub const COUNT_BUCKETS: [&str; 5] = ["1", "2", "3", "4", "5"];
pub const LENGTH_BUCKETS: [&str; 5] = ["[1,2)", "[2,3)", "[3,4)", "[4,5)", "[5,inf)"];

/// Share of queries without a recommendation, grouped by the number of
/// context words (1..=5; longer contexts are not grouped) and by average
/// characters per context word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparsityReport {
    pub by_count: [Bucket; 5],
    pub by_length: [Bucket; 5],
}

pub fn length_bucket(average_chars: f64) -> Option<usize> {
    if average_chars < 1.0 {
        None
    } else {
        Some(((average_chars.floor() as usize) - 1).min(4))
    }
}

pub fn sparsity_rate(queries: &[EvalQuery], scored: &[ScoredQuery]) -> SparsityReport {
    assert_eq!(queries.len(), scored.len());
    let mut report = SparsityReport::default();
    for (q, s) in queries.iter().zip(scored) {
        let add = |b: &mut Bucket| {
            b.queries += 1;
            b.no_recommendation += usize::from(!s.recommended);
        };
        let n = q.context_words.len();
        if (1..=5).contains(&n) {
            add(&mut report.by_count[n - 1]);
        }
        if let Some(i) = length_bucket(q.average_context_chars()) {
            add(&mut report.by_length[i]);
        }
    }
    report
}

/// One `group <TAB> bucket <TAB> model…` table, rates as fractions and
/// `-` for empty buckets.
pub fn sparsity_tsv(rows: &[(String, SparsityReport)]) -> String {
    let mut out = String::from("group\tbucket");
    for (name, _) in rows {
        let _ = write!(out, "\t{name}");
    }
    out.push('\n');
    let groups: [(&str, &[&str; 5], fn(&SparsityReport) -> &[Bucket; 5]); 2] = [
        ("context_words", &COUNT_BUCKETS, |r| &r.by_count),
        ("average_length", &LENGTH_BUCKETS, |r| &r.by_length),
    ];
    for (group, labels, pick) in groups {
        for (i, label) in labels.iter().enumerate() {
            let _ = write!(out, "{group}\t{label}");
            for (_, r) in rows {
                match pick(r)[i].rate() {
                    Some(v) => {
                        let _ = write!(out, "\t{v}");
                    }
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapMode {
    /// |A∩B| / |A∪B|
    #[default]
    Jaccard,
    /// |A∩B| / K
    Intersection,
}

/// Top-K word sets per query; `None` where the model abstained.
pub fn top_sets<M: LanguageModel + ?Sized>(
    model: &M,
    queries: &[EvalQuery],
    k: usize,
) -> Result<Vec<Option<Vec<WordId>>>> {
    queries
        .iter()
        .map(|q| match next_distribution(model, &q.context)? {
            Prediction::Distribution(d) => {
                let mut words: Vec<WordId> = d.top_k(k)?.words().collect();
                words.sort_unstable();
                Ok(Some(words))
            }
            Prediction::NoRecommendation => Ok(None),
        })
        .collect()
}

/// Mean set overlap over queries where both models recommend. Sets must be
/// sorted.
pub fn overlap_rate(
    a: &[Option<Vec<WordId>>],
    b: &[Option<Vec<WordId>>],
    k: usize,
    mode: OverlapMode,
) -> Result<f64> {
    assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in a.iter().zip(b) {
        let (Some(x), Some(y)) = (x, y) else { continue };
        let common = x.iter().filter(|w| y.binary_search(w).is_ok()).count();
        let denom = match mode {
            OverlapMode::Jaccard => x.len() + y.len() - common,
            OverlapMode::Intersection => k,
        };
        sum += common as f64 / denom as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoComparableQueries);
    }
    Ok(sum / n as f64)
}

/// Upper-triangular overlap matrix as TSV; unavailable pairs print `-`.
pub fn overlap_tsv(names: &[String], matrix: &[Vec<Option<f64>>]) -> String {
    let mut out = String::from("overlap");
    for n in names {
        let _ = write!(out, "\t{n}");
    }
    out.push('\n');
    for (i, n) in names.iter().enumerate() {
        out.push_str(n);
        for j in 0..names.len() {
            if j < i {
                out.push('\t');
            } else {
                match matrix[i][j] {
                    Some(v) => {
                        let _ = write!(out, "\t{v}");
                    }
                    None => out.push_str("\t-"),
                }
            }
        }
        out.push('\n');
    }
    out
}
