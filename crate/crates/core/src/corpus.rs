//! Corpus ingestion: preprocessing, vocabulary, train/valid/test split and
//! aggregated evaluation queries.
//!
//! Corpus files are UTF-8, one user-typed sequence per line, tokens separated
//! by spaces exactly as the user segmented them.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lm::{is_reserved, WordId, FIRST_WORD, PAD, UNK};

pub const NUM_TOKEN: &str = "NUM";
pub const PAD_TOKEN: &str = "<s>";
pub const UNK_TOKEN: &str = "<unk>";

fn is_number(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_digit() || ('０'..='９').contains(&c))
}

fn is_english(token: &str) -> bool {
    !token.is_empty() && token != NUM_TOKEN && token.chars().all(|c| c.is_ascii_alphabetic())
}

/// Replaces digit-only tokens with `NUM` and drops purely alphabetic ASCII
/// tokens. Mixed tokens pass through.
pub fn preprocess<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_english(t))
        .map(|t| {
            if is_number(t) {
                NUM_TOKEN.to_string()
            } else {
                t.to_string()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawCorpus {
    pub sequences: Vec<Vec<String>>,
}

impl RawCorpus {
    pub fn new(sequences: Vec<Vec<String>>) -> Self {
        Self { sequences }
    }

    /// One sequence per line; blank lines become empty sequences so that
    /// line numbers and sequence indices stay aligned.
    pub fn parse(text: &str) -> Self {
        let sequences = text
            .lines()
            .map(|line| line.split_whitespace().map(str::to_string).collect())
            .collect();
        Self { sequences }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn preprocessed(&self) -> Self {
        Self {
            sequences: self.sequences.iter().map(|s| preprocess(s)).collect(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
        }
    }

    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, WordId>,
    freq: Vec<u64>,
}

impl Vocabulary {
    /// Words seen at least `min_count` times get ids by descending frequency,
    /// then lexicographically. Rarer tokens are folded into UNK's count.
    pub fn build(train: &RawCorpus, min_count: u64) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::InvalidConfig("min_count must be positive".into()));
        }
        if train.token_count() == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for tok in train.sequences.iter().flatten() {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
        let mut unk = counts.remove(UNK_TOKEN).unwrap_or(0);
        unk += counts.remove(PAD_TOKEN).unwrap_or(0);
        let mut kept: Vec<(&str, u64)> = Vec::new();
        for (word, n) in counts {
            if n >= min_count {
                kept.push((word, n));
            } else {
                unk += n;
            }
        }
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

        let mut words = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut freq = vec![0, unk];
        for (word, n) in kept {
            words.push(word.to_string());
            freq.push(n);
        }
        Ok(Self::from_parts(words, freq))
    }

    fn from_parts(words: Vec<String>, freq: Vec<u64>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .skip(FIRST_WORD as usize)
            .map(|(i, w)| (w.clone(), i as WordId))
            .collect();
        Self { words, index, freq }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= FIRST_WORD as usize
    }

    /// Number of words a model may recommend.
    pub fn recommendable(&self) -> usize {
        self.words.len() - FIRST_WORD as usize
    }

    pub fn lookup(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn id(&self, word: &str) -> WordId {
        self.lookup(word).unwrap_or(UNK)
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn freq(&self, id: WordId) -> u64 {
        self.freq[id as usize]
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.freq
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<WordId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn encode_corpus(&self, corpus: &RawCorpus) -> Vec<Vec<WordId>> {
        corpus.sequences.iter().map(|s| self.encode(s)).collect()
    }

    /// Character length of a word's surface form.
    pub fn char_len(&self, id: WordId) -> usize {
        self.words[id as usize].chars().count()
    }

    /// `id <TAB> word <TAB> frequency`, one entry per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (w, f)) in self.words.iter().zip(&self.freq).enumerate() {
            let _ = writeln!(out, "{i}\t{w}\t{f}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        const WHAT: &str = "vocabulary file";
        let mut words = Vec::new();
        let mut freq = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let mut cols = line.split('\t');
            let (Some(id), Some(word), Some(f), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(Error::format(WHAT, line_no, "expected 3 tab-separated columns"));
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::format(WHAT, line_no, "bad id"))?;
            if id != n {
                return Err(Error::format(WHAT, line_no, "ids must be dense and ordered"));
            }
            let f: u64 = f
                .parse()
                .map_err(|_| Error::format(WHAT, line_no, "bad frequency"))?;
            words.push(word.to_string());
            freq.push(f);
        }
        if words.len() < FIRST_WORD as usize
            || words[PAD as usize] != PAD_TOKEN
            || words[UNK as usize] != UNK_TOKEN
        {
            return Err(Error::format(WHAT, 1, "missing reserved entries"));
        }
        let vocab = Self::from_parts(words, freq);
        if vocab.index.len() != vocab.recommendable() {
            return Err(Error::format(WHAT, 0, "duplicate words"));
        }
        Ok(vocab)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_tsv(&fs::read_to_string(path)?)
    }
}

/// Sequence indices of each partition, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 80/10/10 partition of `n` sequences: train gets ⌊0.8n⌋, valid
/// ⌊0.1n⌋ and test the remainder.
pub fn split(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::TooFewSequences(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let part = |range: std::ops::Range<usize>| {
        let mut v = order[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Split {
        train: part(0..n_train),
        valid: part(n_train..n_train + n_valid),
        test: part(n_train + n_valid..n),
    })
}

pub fn manifest_to_string(indices: &[usize]) -> String {
    indices.iter().fold(String::new(), |mut out, i| {
        let _ = writeln!(out, "{i}");
        out
    })
}

pub fn manifest_from_str(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::format("split manifest", n + 1, "expected a line index"))
        })
        .collect()
}

/// All next words observed after one exact context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalQuery {
    pub context: Vec<WordId>,
    /// Surface forms of the context, used for length bucketing.
    pub context_words: Vec<String>,
    /// Ground-truth words with multiplicities, ascending by id.
    pub truths: Vec<(WordId, u32)>,
}

impl EvalQuery {
    /// Total number of ground-truth instances, U.
    pub fn total(&self) -> u32 {
        self.truths.iter().map(|&(_, m)| m).sum()
    }

    pub fn average_context_chars(&self) -> f64 {
        let chars: usize = self.context_words.iter().map(|w| w.chars().count()).sum();
        chars as f64 / self.context_words.len() as f64
    }
}

/// Each length-n sequence yields n−1 (prefix, next word) pairs; pairs with
/// the same prefix tokens merge into one query. Pairs whose next word is out
/// of vocabulary are dropped, since no model can recommend it.
pub fn make_queries(corpus: &RawCorpus, vocab: &Vocabulary) -> Vec<EvalQuery> {
    let mut merged: BTreeMap<&[String], BTreeMap<WordId, u32>> = BTreeMap::new();
    for seq in &corpus.sequences {
        for k in 1..seq.len() {
            let truth = vocab.id(&seq[k]);
            if is_reserved(truth) {
                continue;
            }
            *merged.entry(&seq[..k]).or_default().entry(truth).or_default() += 1;
        }
    }
    merged
        .into_iter()
        .map(|(ctx, truths)| EvalQuery {
            context: vocab.encode(ctx),
            context_words: ctx.to_vec(),
            truths: truths.into_iter().collect(),
        })
        .collect()
}

/// `context tokens <TAB> word:count word:count …`, one query per line.
pub fn queries_to_tsv(queries: &[EvalQuery], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for q in queries {
        out.push_str(&q.context_words.join(" "));
        out.push('\t');
        for (i, &(w, m)) in q.truths.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}:{m}", vocab.word(w));
        }
        out.push('\n');
    }
    out
}

pub fn queries_from_tsv(text: &str, vocab: &Vocabulary) -> Result<Vec<EvalQuery>> {
    const WHAT: &str = "query file";
    let mut queries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let (ctx, truths) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(WHAT, line_no, "missing tab"))?;
        let context_words: Vec<String> = ctx.split(' ').map(str::to_string).collect();
        if ctx.is_empty() {
            return Err(Error::format(WHAT, line_no, "empty context"));
        }
        let mut parsed = BTreeMap::new();
        for item in truths.split(' ') {
            let (word, count) = item
                .rsplit_once(':')
                .ok_or_else(|| Error::format(WHAT, line_no, "expected word:count"))?;
            let id = vocab
                .lookup(word)
                .ok_or_else(|| Error::format(WHAT, line_no, format!("unknown word {word:?}")))?;
            let count: u32 = count
                .parse()
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::format(WHAT, line_no, "bad count"))?;
            *parsed.entry(id).or_insert(0) += count;
        }
        queries.push(EvalQuery {
            context: vocab.encode(&context_words),
            context_words,
            truths: parsed.into_iter().collect(),
        });
    }
    Ok(queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> RawCorpus {
        RawCorpus::parse(&lines.join("\n"))
    }

    #[test]
    fn numbers_become_num() {
        assert_eq!(preprocess(&["我", "打", "123"]), vec!["我", "打", "NUM"]);
        assert_eq!(preprocess(&["２０１６", "年"]), vec!["NUM", "年"]);
    }

    #[test]
    fn english_words_are_dropped() {
        assert_eq!(preprocess(&["hello", "我们"]), vec!["我们"]);
        assert!(preprocess::<&str>(&[]).is_empty());
        // mixed alphanumerics pass through
        assert_eq!(preprocess(&["mp3", "a1b"]), vec!["mp3", "a1b"]);
    }

    #[test]
    fn vocab_orders_by_frequency() {
        let v = Vocabulary::build(&corpus(&["a b", "a c", "a b"]), 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.word(PAD), PAD_TOKEN);
        assert_eq!(v.word(UNK), UNK_TOKEN);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("c"), 4);
        assert_eq!(v.freq(2), 3);
        assert_eq!(v.freq(UNK), 0);
    }

    #[test]
    fn vocab_cutoff_can_remove_everything() {
        let v = Vocabulary::build(&corpus(&["a b"]), 2).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.is_empty());
        assert_eq!(v.recommendable(), 0);
        assert_eq!(v.freq(UNK), 2);
        assert_eq!(v.id("a"), UNK);
    }

    #[test]
    fn vocab_is_deterministic_and_round_trips() {
        let c = corpus(&["x y z", "y z", "z", "w NUM"]);
        let a = Vocabulary::build(&c, 1).unwrap();
        let b = Vocabulary::build(&c, 1).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert_eq!(Vocabulary::from_tsv(&a.to_tsv()).unwrap(), a);
    }

    #[test]
    fn empty_corpus_has_no_vocabulary() {
        assert!(matches!(
            Vocabulary::build(&corpus(&["", ""]), 1),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn reserved_surface_forms_never_get_word_ids() {
        let v = Vocabulary::build(&corpus(&["<s> a <unk>"]), 1).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("<s>"), UNK);
        assert_eq!(v.freq(UNK), 2);
    }

    #[test]
    fn ten_sequences_split_eight_one_one() {
        let s = split(10, 3).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
        assert_eq!(split(10, 3).unwrap(), s);
        assert!(matches!(split(9, 0), Err(Error::TooFewSequences(9))));
    }

    #[test]
    fn split_partitions_exactly() {
        let s = split(1000, 11).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (800, 100, 100));
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        let m = manifest_to_string(&s.valid);
        assert_eq!(manifest_from_str(&m).unwrap(), s.valid);
    }

    #[test]
    fn one_sequence_yields_prefix_queries() {
        let c = corpus(&["a b c"]);
        let v = Vocabulary::build(&c, 1).unwrap();
        let q = make_queries(&c, &v);
        assert_eq!(q.len(), 2);
        assert_eq!(q[0].context_words, vec!["a"]);
        assert_eq!(q[0].truths, vec![(v.id("b"), 1)]);
        assert_eq!(q[1].context_words, vec!["a", "b"]);
        assert_eq!(q[1].truths, vec![(v.id("c"), 1)]);
    }

    #[test]
    fn shared_contexts_aggregate() {
        let c = corpus(&["x y", "x z", "q"]);
        let v = Vocabulary::build(&c, 1).unwrap();
        let q = make_queries(&c, &v);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].context, vec![v.id("x")]);
        assert_eq!(q[0].total(), 2);
        assert_eq!(q[0].truths.len(), 2);
    }

    #[test]
    fn out_of_vocabulary_truths_are_dropped() {
        let train = corpus(&["a b"]);
        let v = Vocabulary::build(&train, 1).unwrap();
        let q = make_queries(&corpus(&["a zz", "a b"]), &v);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].truths, vec![(v.id("b"), 1)]);
    }

    #[test]
    fn query_file_round_trips() {
        let c = corpus(&["我 们 NUM", "我 们 好", "我 他"]);
        let v = Vocabulary::build(&c, 1).unwrap();
        let q = make_queries(&c, &v);
        let text = queries_to_tsv(&q, &v);
        assert_eq!(queries_from_tsv(&text, &v).unwrap(), q);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn token() -> impl Strategy<Value = String> {
            prop_oneof![
                "[a-zA-Z]{1,4}",
                "[0-9]{1,3}",
                "[０-９]{1,2}",
                "[一-龥]{1,3}",
                "[a-z0-9]{1,4}",
                Just("NUM".to_string()),
            ]
        }

        proptest! {
            #[test]
            fn preprocess_is_idempotent(tokens in prop::collection::vec(token(), 0..12)) {
                let once = preprocess(&tokens);
                prop_assert_eq!(preprocess(&once), once);
            }

            #[test]
            fn aggregation_preserves_pair_count(
                seqs in prop::collection::vec(prop::collection::vec("[a-d]", 0..6), 1..20)
            ) {
                let c = RawCorpus::new(seqs);
                prop_assume!(c.token_count() > 0);
                let v = Vocabulary::build(&c, 1).unwrap();
                let pairs: usize = c.sequences.iter().map(|s| s.len().saturating_sub(1)).sum();
                let q = make_queries(&c, &v);
                let total: u32 = q.iter().map(EvalQuery::total).sum();
                prop_assert_eq!(total as usize, pairs);
                prop_assert!(q.iter().all(|q| q.total() >= 1 && !q.context.is_empty()));
            }
        }
    }
}
