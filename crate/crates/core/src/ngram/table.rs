use std::collections::BTreeMap;

use crate::lm::{is_reserved, WordId, PAD};

/// Statistics for one context. Children extend the context one word further
/// into the past, so the path from the root spells the context newest-first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Node {
    pub(crate) children: BTreeMap<WordId, Node>,
    /// count(c·w)
    pub(crate) next: BTreeMap<WordId, u64>,
    /// Σ_w count(c·w)
    pub(crate) total: u64,
    /// Number of distinct non-padding words x with count(x·c·w) > 0.
    pub(crate) cont: BTreeMap<WordId, u64>,
    pub(crate) cont_total: u64,
}

impl Node {
    fn finalize(&mut self) {
        let mut cont: BTreeMap<WordId, u64> = BTreeMap::new();
        for (&older, child) in self.children.iter_mut() {
            child.finalize();
            if older == PAD {
                continue;
            }
            for &w in child.next.keys() {
                *cont.entry(w).or_default() += 1;
            }
        }
        self.cont_total = cont.values().sum();
        self.cont = cont;
    }

    fn collect(&self, depth: usize, path: &mut Vec<WordId>, out: &mut Vec<(Vec<WordId>, u64)>) {
        if path.len() == depth {
            for (&w, &c) in &self.next {
                let mut gram: Vec<WordId> = path.iter().rev().copied().collect();
                gram.push(w);
                out.push((gram, c));
            }
            return;
        }
        for (&older, child) in &self.children {
            path.push(older);
            child.collect(depth, path, out);
            path.pop();
        }
    }
}

/// N-gram counts for orders 1..=N over padded sequences.
///
/// Each sequence is prefixed with N−1 padding tokens so its first word has
/// a full-order context. Only n-grams ending in a recommendable word are
/// counted; padding and UNK may appear inside contexts but are never
/// predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramTable {
    order: usize,
    vocab_size: usize,
    pub(crate) root: Node,
}

impl NGramTable {
    pub fn new(order: usize, vocab_size: usize) -> Self {
        assert!(order >= 1, "n-gram order must be at least 1");
        Self {
            order,
            vocab_size,
            root: Node::default(),
        }
    }

    pub fn count_ngrams(sequences: &[Vec<WordId>], order: usize, vocab_size: usize) -> Self {
        let mut table = Self::new(order, vocab_size);
        let pad = order - 1;
        let mut padded = Vec::new();
        for seq in sequences {
            padded.clear();
            padded.resize(pad, PAD);
            padded.extend_from_slice(seq);
            for i in pad..padded.len() {
                let w = padded[i];
                if is_reserved(w) {
                    continue;
                }
                for n in 1..=order {
                    table.add(&padded[i + 1 - n..i], w, 1);
                }
            }
        }
        table.freeze();
        table
    }

    /// Rebuilds a table from explicit n-gram counts (as stored on disk).
    pub fn from_counts<I>(order: usize, vocab_size: usize, grams: I) -> Self
    where
        I: IntoIterator<Item = (Vec<WordId>, u64)>,
    {
        let mut table = Self::new(order, vocab_size);
        for (gram, c) in grams {
            let (&w, context) = gram.split_last().expect("empty n-gram");
            table.add(context, w, c);
        }
        table.freeze();
        table
    }

    fn add(&mut self, context: &[WordId], w: WordId, c: u64) {
        let mut node = &mut self.root;
        for &older in context.iter().rev() {
            node = node.children.entry(older).or_default();
        }
        *node.next.entry(w).or_default() += c;
        node.total += c;
    }

    /// Derives continuation counts; the table is read-only afterwards.
    fn freeze(&mut self) {
        self.root.finalize();
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub(crate) fn node(&self, context: &[WordId]) -> Option<&Node> {
        let mut node = &self.root;
        for older in context.iter().rev() {
            node = node.children.get(older)?;
        }
        Some(node)
    }

    /// count(w_1 … w_n); zero when unseen.
    pub fn count(&self, gram: &[WordId]) -> u64 {
        let Some((w, context)) = gram.split_last() else {
            return 0;
        };
        self.node(context)
            .and_then(|n| n.next.get(w).copied())
            .unwrap_or(0)
    }

    /// count(c) as a context: Σ_w count(c·w).
    pub fn context_count(&self, context: &[WordId]) -> u64 {
        self.node(context).map_or(0, |n| n.total)
    }

    /// t(c): distinct words seen after `context`.
    pub fn followers(&self, context: &[WordId]) -> usize {
        self.node(context).map_or(0, |n| n.next.len())
    }

    /// Distinct non-padding left extensions of `gram`.
    pub fn continuation(&self, gram: &[WordId]) -> u64 {
        let Some((w, context)) = gram.split_last() else {
            return 0;
        };
        self.node(context)
            .and_then(|n| n.cont.get(w).copied())
            .unwrap_or(0)
    }

    /// All n-grams of one order with their counts, sorted by id sequence.
    pub fn ngrams(&self, n: usize) -> Vec<(Vec<WordId>, u64)> {
        let mut out = Vec::new();
        if n >= 1 && n <= self.order {
            self.root.collect(n - 1, &mut Vec::new(), &mut out);
        }
        out.sort_unstable();
        out
    }

    /// (n1, n2): number of order-`n` n-grams seen exactly once and twice.
    pub fn count_of_counts(&self, n: usize) -> (u64, u64) {
        self.ngrams(n)
            .iter()
            .fold((0, 0), |(n1, n2), &(_, c)| match c {
                1 => (n1 + 1, n2),
                2 => (n1, n2 + 1),
                _ => (n1, n2),
            })
    }

    pub fn is_empty(&self) -> bool {
        self.root.total == 0
    }

    /// The last N−1 words of `context`, left-padded with sentence-start
    /// tokens when the history is shorter.
    pub fn padded_context(&self, context: &[WordId]) -> Vec<WordId> {
        let want = self.order - 1;
        let keep = context.len().min(want);
        let mut out = vec![PAD; want - keep];
        out.extend_from_slice(&context[context.len() - keep..]);
        out
    }
}
