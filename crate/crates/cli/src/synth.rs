//! Synthetic corpus with a second-order Markov source and a set of held-out
//! words that only end sentences in training but appear mid-sentence in the
//! validation and test splits.

use std::collections::BTreeSet;

use anyhow::{ensure, Result};
use nextword::corpus;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub sequences: usize,
    /// Distinct words, held-out ones included.
    pub vocab: usize,
    pub held_out: usize,
    /// Per-position replacement rate in the validation and test splits.
    pub injection: f64,
    /// Must match the experiment seed so that the split lines up.
    pub seed: u64,
}

const MIN_LEN: usize = 6;
const MAX_LEN: usize = 12;
const FINAL_HELD_OUT: f64 = 0.25;
const BIGRAM_WEIGHTS: [f64; 6] = [8.0, 4.0, 2.0, 1.0, 1.0, 1.0];
const TRIGRAM_WEIGHTS: [f64; 2] = [6.0, 3.0];

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn surface_forms<R: Rng>(n: usize, rng: &mut R) -> Vec<String> {
    let lengths = WeightedIndex::new([3, 4, 3, 2, 1]).expect("static weights");
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = lengths.sample(rng) + 1;
        let word: String = (0..len)
            .map(|_| char::from_u32(rng.gen_range(0x4E00..=0x9FA5)).expect("CJK block"))
            .collect();
        if seen.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

struct Source {
    regular: usize,
    seed: u64,
    popularity: WeightedIndex<f64>,
    bigram: Vec<[usize; 6]>,
}

impl Source {
    fn new<R: Rng>(regular: usize, seed: u64, rng: &mut R) -> Self {
        let popularity =
            WeightedIndex::new((0..regular).map(|r| 1.0 / (r as f64 + 1.0).powf(0.8)))
                .expect("positive weights");
        // state index `regular` is sentence start
        let bigram = (0..=regular)
            .map(|_| std::array::from_fn(|_| popularity.sample(rng)))
            .collect();
        Self {
            regular,
            seed,
            popularity,
            bigram,
        }
    }

    fn next<R: Rng>(&self, a: usize, b: usize, rng: &mut R) -> usize {
        let key = splitmix(self.seed ^ splitmix((a * (self.regular + 1) + b) as u64));
        let mut local = ChaCha8Rng::seed_from_u64(key);
        let extra: [usize; 2] = std::array::from_fn(|_| self.popularity.sample(&mut local));
        let mut candidates = self.bigram[b].to_vec();
        candidates.extend(extra);
        let weights = BIGRAM_WEIGHTS.iter().chain(&TRIGRAM_WEIGHTS);
        let pick = WeightedIndex::new(weights).expect("static weights");
        candidates[pick.sample(rng)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCorpus {
    /// One sequence per line, words separated by spaces.
    pub text: String,
    pub held_out: Vec<String>,
}

pub fn generate(p: &SynthParams) -> Result<String> {
    Ok(generate_corpus(p)?.text)
}

pub fn generate_corpus(p: &SynthParams) -> Result<SynthCorpus> {
    ensure!(p.sequences >= 10, "synthetic corpus needs at least 10 sequences");
    ensure!(
        p.held_out >= 1 && p.held_out < p.vocab,
        "held-out words must number between 1 and vocab - 1"
    );
    ensure!(
        (0.0..=1.0).contains(&p.injection),
        "injection rate must lie in [0, 1]"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let words = surface_forms(p.vocab, &mut rng);
    let regular = p.vocab - p.held_out;
    let source = Source::new(regular, p.seed, &mut rng);

    rng.set_stream(1);
    let mut seqs: Vec<Vec<usize>> = (0..p.sequences)
        .map(|_| {
            let len = rng.gen_range(MIN_LEN..=MAX_LEN);
            let (mut a, mut b) = (regular, regular);
            let mut seq = Vec::with_capacity(len);
            for i in 0..len {
                let w = if i + 1 == len && rng.gen_bool(FINAL_HELD_OUT) {
                    regular + rng.gen_range(0..p.held_out)
                } else {
                    source.next(a, b, &mut rng)
                };
                seq.push(w);
                (a, b) = (b, w.min(regular));
            }
            seq
        })
        .collect();

    let split = corpus::split(p.sequences, p.seed)?;
    rng.set_stream(2);
    for &s in split.valid.iter().chain(&split.test) {
        let seq = &mut seqs[s];
        let last = seq.len() - 1;
        for w in &mut seq[..last] {
            if rng.gen_bool(p.injection) {
                *w = regular + rng.gen_range(0..p.held_out);
            }
        }
    }

    let mut out = String::new();
    for seq in seqs {
        let line: Vec<&str> = seq.iter().map(|&w| words[w].as_str()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(SynthCorpus {
        text: out,
        held_out: words[regular..].to_vec(),
    })
}
