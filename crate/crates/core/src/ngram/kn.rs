//! Interpolated Kneser-Ney.
//!
//! The highest order discounts raw counts. Lower orders discount
//! continuation counts (how many distinct real words precede the n-gram),
//! and the recursion ends in a continuation unigram interpolated with a
//! uniform distribution over recommendable words.

use crate::lm::{Distribution, Prediction, WordId, FIRST_WORD};

use super::table::{NGramTable, Node};

/// Fallback when an order has neither singletons nor doubletons.
pub const DEFAULT_DISCOUNT: f64 = 0.5;

/// One absolute discount per order n = 2..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct KnDiscounts {
    by_order: Vec<f64>,
}

impl KnDiscounts {
    /// The same discount at every order.
    pub fn fixed(order: usize, d: f64) -> Self {
        assert!((0.0..1.0).contains(&d), "discount must lie in [0, 1)");
        Self {
            by_order: vec![d; order.saturating_sub(1)],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Option<Self> {
        values
            .iter()
            .all(|d| (0.0..1.0).contains(d))
            .then_some(Self { by_order: values })
    }

    /// Discount for n-grams of order `n` (≥ 2).
    pub fn get(&self, n: usize) -> f64 {
        self.by_order[n - 2]
    }

    pub fn values(&self) -> &[f64] {
        &self.by_order
    }
}

/// d = n1 / (n1 + 2·n2), or [`DEFAULT_DISCOUNT`] when there are no
/// doubletons (the ratio would be 0/0 or 1).
pub fn discount_from_count_of_counts(n1: u64, n2: u64) -> f64 {
    let denom = n1 + 2 * n2;
    if n2 == 0 {
        DEFAULT_DISCOUNT
    } else {
        n1 as f64 / denom as f64
    }
}

pub fn estimate_discounts(table: &NGramTable) -> KnDiscounts {
    let by_order = (2..=table.order())
        .map(|n| {
            let (n1, n2) = table.count_of_counts(n);
            discount_from_count_of_counts(n1, n2)
        })
        .collect();
    KnDiscounts { by_order }
}

#[derive(Clone, Copy)]
struct Level<'t> {
    counts: &'t std::collections::BTreeMap<WordId, u64>,
    total: f64,
    types: f64,
    discount: f64,
}

impl Level<'_> {
    #[inline]
    fn own(&self, w: WordId) -> f64 {
        let c = self.counts.get(&w).copied().unwrap_or(0) as f64;
        (c - self.discount).max(0.0) / self.total
    }

    #[inline]
    fn backoff_weight(&self) -> f64 {
        self.discount * self.types / self.total
    }
}

pub struct KneserNey<'t> {
    table: &'t NGramTable,
    discounts: &'t KnDiscounts,
    uniform_floor: bool,
}

impl<'t> KneserNey<'t> {
    pub fn new(table: &'t NGramTable, discounts: &'t KnDiscounts, uniform_floor: bool) -> Self {
        assert!(table.order() >= 2, "Kneser-Ney needs order >= 2");
        assert_eq!(discounts.values().len(), table.order() - 1);
        Self {
            table,
            discounts,
            uniform_floor,
        }
    }

    fn recommendable(&self) -> usize {
        self.table.vocab_size().saturating_sub(FIRST_WORD as usize)
    }

    /// Statistics at the level whose context has `k` words, or `None` when
    /// that context carries no mass and the estimate passes straight through.
    fn level(&self, node: Option<&'t Node>, k: usize) -> Option<Level<'t>> {
        let node = node?;
        let top = k + 1 == self.table.order();
        let (counts, total) = if top {
            (&node.next, node.total)
        } else {
            (&node.cont, node.cont_total)
        };
        if total == 0 {
            return None;
        }
        Some(Level {
            counts,
            total: total as f64,
            types: counts.len() as f64,
            // the unigram level borrows the bigram discount
            discount: self.discounts.get((k + 1).max(2)),
        })
    }

    fn unigram(&self) -> Option<Level<'t>> {
        let mut level = self.level(Some(&self.table.root), 0)?;
        if !self.uniform_floor {
            level.discount = 0.0;
        }
        Some(level)
    }

    /// Continuation unigram without the uniform floor.
    pub fn continuation_unigram(&self, w: WordId) -> f64 {
        let root = &self.table.root;
        if root.cont_total == 0 {
            return 0.0;
        }
        root.cont.get(&w).copied().unwrap_or(0) as f64 / root.cont_total as f64
    }

    fn unigram_prob(&self, w: WordId) -> f64 {
        let uniform = 1.0 / self.recommendable() as f64;
        match self.unigram() {
            None => uniform,
            Some(l) => l.own(w) + l.backoff_weight() * uniform,
        }
    }

    pub fn prob(&self, context: &[WordId], w: WordId) -> f64 {
        if crate::lm::is_reserved(w) || self.recommendable() == 0 {
            return 0.0;
        }
        let ctx = self.table.padded_context(context);
        let mut p = self.unigram_prob(w);
        for k in 1..=ctx.len() {
            let node = self.table.node(&ctx[ctx.len() - k..]);
            if let Some(l) = self.level(node, k) {
                p = l.own(w) + l.backoff_weight() * p;
            }
        }
        p
    }

    pub fn distribution(&self, context: &[WordId]) -> Prediction {
        let n_rec = self.recommendable();
        if n_rec == 0 {
            return Prediction::NoRecommendation;
        }
        let first = FIRST_WORD as usize;
        let mut probs = vec![0.0; self.table.vocab_size()];
        let uniform = 1.0 / n_rec as f64;
        match self.unigram() {
            None => probs[first..].fill(uniform),
            Some(l) => {
                probs[first..].fill(l.backoff_weight() * uniform);
                for (&w, &c) in l.counts {
                    probs[w as usize] += (c as f64 - l.discount).max(0.0) / l.total;
                }
            }
        }
        let ctx = self.table.padded_context(context);
        for k in 1..=ctx.len() {
            let node = self.table.node(&ctx[ctx.len() - k..]);
            let Some(l) = self.level(node, k) else {
                continue;
            };
            let scale = l.backoff_weight();
            probs[first..].iter_mut().for_each(|p| *p *= scale);
            for (&w, &c) in l.counts {
                probs[w as usize] += (c as f64 - l.discount).max(0.0) / l.total;
            }
        }
        Prediction::Distribution(Distribution::from_normalized(probs))
    }
}
