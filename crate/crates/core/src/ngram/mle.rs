use crate::lm::{Distribution, Prediction, WordId};

use super::table::{NGramTable, Node};

/// How the unsmoothed model treats a full-order context it has never seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MleOptions {
    /// Fall back to shorter contexts (longest match first, down to bigram).
    pub backoff: bool,
    /// When no context of order ≥ 2 matches, use unigram frequencies
    /// instead of reporting no recommendation.
    pub unigram_fallback: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            backoff: true,
            unigram_fallback: false,
        }
    }
}

/// The node whose counts the MLE estimate reads, or `None` for
/// no-recommendation.
fn matching_node<'t>(
    table: &'t NGramTable,
    context: &[WordId],
    opts: MleOptions,
) -> Option<&'t Node> {
    let padded = table.padded_context(context);
    let longest = padded.len();
    if longest == 0 {
        return Some(&table.root).filter(|n| n.total > 0);
    }
    let shortest = if opts.backoff { 1 } else { longest };
    (shortest..=longest)
        .rev()
        .filter_map(|k| table.node(&padded[longest - k..]))
        .find(|n| n.total > 0)
        .or_else(|| Some(&table.root).filter(|n| opts.unigram_fallback && n.total > 0))
}

/// count(c, w) / count(c) at the context the options select; `None` means
/// the model makes no recommendation for this context.
pub fn prob_mle(
    table: &NGramTable,
    context: &[WordId],
    w: WordId,
    opts: MleOptions,
) -> Option<f64> {
    let node = matching_node(table, context, opts)?;
    let c = node.next.get(&w).copied().unwrap_or(0);
    Some(c as f64 / node.total as f64)
}

pub fn mle_distribution(table: &NGramTable, context: &[WordId], opts: MleOptions) -> Prediction {
    let Some(node) = matching_node(table, context, opts) else {
        return Prediction::NoRecommendation;
    };
    let mut probs = vec![0.0; table.vocab_size()];
    let total = node.total as f64;
    for (&w, &c) in &node.next {
        probs[w as usize] = c as f64 / total;
    }
    Prediction::Distribution(Distribution::from_normalized(probs))
}
