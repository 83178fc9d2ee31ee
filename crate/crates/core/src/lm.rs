//! The contract shared by every model family.
//!
//! A model maps a typing history (word ids, oldest first) to either a
//! normalized distribution over recommendable words or an explicit
//! [`Prediction::NoRecommendation`]. Reserved ids (sentence-start padding
//! and the unknown-word token) never carry probability mass.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub type WordId = u32;

/// Sentence-start padding.
pub const PAD: WordId = 0;
/// Out-of-vocabulary words.
pub const UNK: WordId = 1;
/// Smallest id a recommendable word can have.
pub const FIRST_WORD: WordId = 2;

#[inline]
pub fn is_reserved(id: WordId) -> bool {
    id < FIRST_WORD
}

/// Dense next-word distribution indexed by word id.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Normalizes non-negative weights; reserved ids are zeroed first.
    /// Returns `None` when no recommendable word has positive weight.
    pub fn from_weights(mut weights: Vec<f64>) -> Option<Self> {
        for w in weights.iter_mut().take(FIRST_WORD as usize) {
            *w = 0.0;
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        Some(Self { probs: weights })
    }

    /// Softmax over the recommendable entries of `logits`.
    pub fn from_logits(logits: &[f64]) -> Option<Self> {
        let first = FIRST_WORD as usize;
        if logits.len() <= first {
            return None;
        }
        let max = logits[first..]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut probs = vec![0.0; logits.len()];
        let mut total = 0.0;
        for (p, &y) in probs[first..].iter_mut().zip(&logits[first..]) {
            *p = (y - max).exp();
            total += *p;
        }
        for p in probs[first..].iter_mut() {
            *p /= total;
        }
        Some(Self { probs })
    }

    pub fn uniform(vocab_size: usize) -> Option<Self> {
        Self::from_weights(vec![1.0; vocab_size])
    }

    /// Wraps probabilities that are already normalized; used by mixtures.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    #[inline]
    pub fn prob(&self, id: WordId) -> f64 {
        self.probs.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Every word with nonzero mass, best first.
    pub fn ranking(&self) -> Vec<WordId> {
        let mut ids: Vec<WordId> = (0..self.probs.len() as WordId)
            .filter(|&w| self.probs[w as usize] > 0.0)
            .collect();
        ids.sort_unstable_by(|&a, &b| self.order(a, b));
        ids
    }

    /// Rank (1-based) of `w` in [`Distribution::ranking`], without sorting.
    pub fn rank_of(&self, w: WordId) -> Option<usize> {
        let p = self.prob(w);
        if p <= 0.0 {
            return None;
        }
        let ahead = self
            .probs
            .iter()
            .enumerate()
            .filter(|&(v, &q)| q > p || (q == p && (v as WordId) < w))
            .count();
        Some(ahead + 1)
    }

    pub fn top_k(&self, k: usize) -> Result<RecommendationList> {
        top_k(self, k)
    }

    /// Score-descending, id-ascending on ties.
    #[inline]
    fn order(&self, a: WordId, b: WordId) -> Ordering {
        self.probs[b as usize]
            .total_cmp(&self.probs[a as usize])
            .then(a.cmp(&b))
    }
}

/// Outcome of asking a model for the next word.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Distribution(Distribution),
    NoRecommendation,
}

impl Prediction {
    pub fn distribution(&self) -> Option<&Distribution> {
        match self {
            Prediction::Distribution(d) => Some(d),
            Prediction::NoRecommendation => None,
        }
    }

    pub fn is_recommendation(&self) -> bool {
        matches!(self, Prediction::Distribution(_))
    }
}

impl From<Option<Distribution>> for Prediction {
    fn from(d: Option<Distribution>) -> Self {
        d.map_or(Prediction::NoRecommendation, Prediction::Distribution)
    }
}

/// A next-word model. Implementations are immutable once built, so a
/// shared reference can serve many threads at once.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Scores the next word after `context` (oldest word first). Callers go
    /// through [`next_distribution`], which validates the ids.
    fn predict(&self, context: &[WordId]) -> Prediction;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, context: &[WordId]) -> Prediction {
        (**self).predict(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, context: &[WordId]) -> Prediction {
        (**self).predict(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, context: &[WordId]) -> Prediction {
        (**self).predict(context)
    }
}

pub fn validate_context(context: &[WordId], vocab_size: usize) -> Result<()> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    match context.iter().find(|&&w| w as usize >= vocab_size) {
        Some(&id) => Err(Error::VocabularyMismatch {
            id,
            size: vocab_size,
        }),
        None => Ok(()),
    }
}

pub fn next_distribution<M: LanguageModel + ?Sized>(
    model: &M,
    context: &[WordId],
) -> Result<Prediction> {
    validate_context(context, model.vocab_size())?;
    Ok(model.predict(context))
}

/// Ranked recommendations, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    pub items: Vec<(WordId, f64)>,
    pub k: usize,
}

impl RecommendationList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = WordId> + '_ {
        self.items.iter().map(|&(w, _)| w)
    }
}

pub fn top_k(dist: &Distribution, k: usize) -> Result<RecommendationList> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let mut ids: Vec<WordId> = (0..dist.probs.len() as WordId)
        .filter(|&w| dist.probs[w as usize] > 0.0)
        .collect();
    if ids.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    if ids.len() > k {
        ids.select_nth_unstable_by(k - 1, |&a, &b| dist.order(a, b));
        ids.truncate(k);
    }
    ids.sort_unstable_by(|&a, &b| dist.order(a, b));
    Ok(RecommendationList {
        items: ids.into_iter().map(|w| (w, dist.prob(w))).collect(),
        k,
    })
}

/// Every recommendable word gets the same mass.
#[derive(Debug, Clone, Copy)]
pub struct UniformModel {
    pub vocab_size: usize,
}

impl LanguageModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, _context: &[WordId]) -> Prediction {
        Distribution::uniform(self.vocab_size).into()
    }
}
