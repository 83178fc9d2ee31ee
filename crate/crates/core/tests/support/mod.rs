//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nextword::corpus::{EvalQuery, Vocabulary};
use nextword::neural::{
    CbowParams, ContextWeighting, LstmParams, NlmParams, NoiseDistribution, Parameters, RnnParams,
};
use nextword::{Distribution, LanguageModel, Prediction, WordId, PAD};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor so entries where both gradients vanish compare on
/// absolute error.
pub const FD_FLOOR: f64 = 1e-6;

/// Largest relative error between `grads` and central differences of
/// `loss` over every parameter of `params`.
pub fn max_relative_error<P: Parameters>(params: &P, grads: &P, loss: impl Fn(&P) -> f64) -> f64 {
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.num_params() {
        let x = params.flat_get(i);
        probe.flat_set(i, x + FD_EPS);
        let up = loss(&probe);
        probe.flat_set(i, x - FD_EPS);
        let down = loss(&probe);
        probe.flat_set(i, x);
        let numeric = (up - down) / (2.0 * FD_EPS);
        let analytic = grads.flat_get(i);
        let denom = analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

fn random_words(rng: &mut ChaCha8Rng, n: usize, vocab: usize, allow_pad: bool) -> Vec<WordId> {
    let lo = if allow_pad { 0 } else { 2 };
    (0..n).map(|_| rng.gen_range(lo..vocab) as WordId).collect()
}

/// NLM: vocab 12, d=4, h=3, window 2, batch of 4, weight decay 0.01.
pub fn nlm_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = NlmParams::init(12, 4, 2, 3, 0.5, &mut rng);
    let mut batch = Vec::new();
    for _ in 0..4 {
        let window = random_words(&mut rng, 2, 12, true);
        let target = rng.gen_range(2..12) as WordId;
        batch.push((window, target));
    }
    // non-zero biases so their gradients are exercised away from zero
    let mut p = p;
    p.b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    p.b_h.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    let (_, grads) = p.loss_and_grad(&batch, 0.01);
    max_relative_error(&p, &grads, |q| q.loss_and_grad(&batch, 0.01).0)
}

/// CBOW: vocab 12, d=4, window 3, l=3 fixed negatives; both the mean and
/// the position-weighted context.
pub fn cbow_gradient_error(seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for weighting in [ContextWeighting::Mean, ContextWeighting::Position] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = CbowParams::init(12, 4, 3, 3, weighting, 0.5, &mut rng);
        let freq: Vec<u64> = (0..12).map(|w| if w < 2 { 0 } else { w as u64 }).collect();
        let noise = NoiseDistribution::from_frequencies(&freq).unwrap();
        let mut batch = Vec::new();
        let mut negatives = Vec::new();
        for len in [3, 2, 3] {
            let ctx = random_words(&mut rng, len, 12, false);
            let target = rng.gen_range(2..12) as WordId;
            negatives.push(noise.sample_negatives(3, target, &mut rng));
            batch.push((ctx, target));
        }
        let (_, grads) = p.loss_and_grad(&batch, &negatives);
        worst = worst.max(max_relative_error(&p, &grads, |q| {
            q.loss_and_grad(&batch, &negatives).0
        }));
    }
    worst
}

/// RNN: vocab 8, d=h=4, one 4-word sequence (3 unrolled steps).
pub fn rnn_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = RnnParams::init(8, 4, 0.5, &mut rng);
    let seqs = vec![random_words(&mut rng, 4, 8, false)];
    let (_, grads) = p.loss_and_grad(&seqs, 0.01);
    max_relative_error(&p, &grads, |q| q.loss_and_grad(&seqs, 0.01).0)
}

/// LSTM: vocab 8, d=h=4, one 5-word sequence (4 unrolled steps).
pub fn lstm_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LstmParams::init(8, 4, 4, 0.5, &mut rng);
    for b in [&mut p.b_i, &mut p.b_c, &mut p.b_o, &mut p.b_y] {
        b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
    let seqs = vec![random_words(&mut rng, 5, 8, false)];
    let (_, grads) = p.loss_and_grad(&seqs, 0.01);
    max_relative_error(&p, &grads, |q| q.loss_and_grad(&seqs, 0.01).0)
}

pub const GRADIENT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// MLE estimate by scanning the raw sequences: the longest context suffix
/// (down to one word when `backoff`) that occurs before some counted word.
pub fn brute_force_mle(
    sequences: &[Vec<WordId>],
    order: usize,
    context: &[WordId],
    w: WordId,
    backoff: bool,
) -> Option<Ratio<u64>> {
    let pad = order - 1;
    let mut history = vec![PAD; pad];
    history.extend_from_slice(context);
    let full = &history[history.len() - pad..];
    let shortest = if backoff { 1 } else { pad };
    for k in (shortest..=pad).rev() {
        let suffix = &full[pad - k..];
        let (mut num, mut den) = (0u64, 0u64);
        for seq in sequences {
            let mut padded = vec![PAD; pad];
            padded.extend_from_slice(seq);
            for i in pad..padded.len() {
                if padded[i] < 2 {
                    continue;
                }
                if &padded[i - k..i] == suffix {
                    den += 1;
                    num += u64::from(padded[i] == w);
                }
            }
        }
        if den > 0 {
            return Some(Ratio::new(num, den));
        }
    }
    None
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Six words with 1 to 4 characters: x=2, y=3, z=4, u=5, v=6, t=7.
pub fn fixture_vocab() -> Vocabulary {
    let text = "0\t<s>\t0\n1\t<unk>\t0\n2\t好\t9\n3\t你好\t8\n4\t电话号\t7\n5\t红包\t6\n6\t好友群聊\t5\n7\tNUM\t4\n";
    Vocabulary::from_tsv(text).unwrap()
}

pub const X: WordId = 2;
pub const Y: WordId = 3;
pub const Z: WordId = 4;
pub const U: WordId = 5;
pub const V: WordId = 6;
pub const T: WordId = 7;

/// Per query: the model's full ordering (best first) or `None` for no
/// recommendation, and the ground truths with multiplicities.
pub type FixtureQuery = (Option<[WordId; 6]>, Vec<(WordId, u32)>);

/// The frozen five-query fixture.
pub fn metric_fixture() -> Vec<FixtureQuery> {
    vec![
        (Some([X, Z, Y, U, V, T]), vec![(X, 1), (Y, 1)]),
        (Some([U, Y, Z, X, V, T]), vec![(Y, 2), (Z, 1)]),
        (None, vec![(V, 1)]),
        (Some([T, V, X, Y, Z, U]), vec![(U, 1)]),
        (Some([Z, X, Y, U, V, T]), vec![(X, 3), (Z, 1)]),
    ]
}

/// Answers each fixture context (one word, the query index + 2) with the
/// fixture's ordering.
pub struct FixtureModel {
    pub answers: BTreeMap<WordId, Prediction>,
}

impl LanguageModel for FixtureModel {
    fn vocab_size(&self) -> usize {
        8
    }

    fn predict(&self, context: &[WordId]) -> Prediction {
        self.answers[&context[0]].clone()
    }
}

/// The fixture as a model plus its queries.
pub fn fixture_model(fixture: &[FixtureQuery]) -> (FixtureModel, Vec<EvalQuery>) {
    let mut answers = BTreeMap::new();
    let mut queries = Vec::new();
    for (i, (order, truths)) in fixture.iter().enumerate() {
        let key = i as WordId + 2;
        let prediction = match order {
            Some(order) => {
                let mut weights = vec![0.0; 8];
                for (rank, &w) in order.iter().enumerate() {
                    weights[w as usize] = (6 - rank) as f64;
                }
                Prediction::Distribution(Distribution::from_weights(weights).unwrap())
            }
            None => Prediction::NoRecommendation,
        };
        answers.insert(key, prediction);
        let mut truths = truths.clone();
        truths.sort_unstable();
        queries.push(EvalQuery {
            context: vec![key],
            context_words: vec!["好".into()],
            truths,
        });
    }
    (FixtureModel { answers }, queries)
}

/// Metric values computed directly from the lists in exact arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RationalMetrics {
    /// `None` when every query abstained.
    pub precision: Option<Ratio<u64>>,
    pub recall: Ratio<u64>,
    pub saved_chars: Ratio<u64>,
}

pub fn rational_at_k(fixture: &[FixtureQuery], vocab: &Vocabulary, k: usize) -> RationalMetrics {
    let (mut hits, mut lists, mut total, mut char_hits, mut chars) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (order, truths) in fixture {
        for &(w, m) in truths {
            let len = vocab.word(w).chars().count() as u64;
            total += u64::from(m);
            chars += u64::from(m) * len;
            if order.is_some_and(|o| o[..k].contains(&w)) {
                hits += u64::from(m);
                char_hits += u64::from(m) * len;
            }
        }
        lists += u64::from(order.is_some());
    }
    RationalMetrics {
        precision: (lists > 0).then(|| Ratio::new(hits, k as u64 * lists)),
        recall: Ratio::new(hits, total),
        saved_chars: Ratio::new(char_hits, chars),
    }
}

pub fn rational_map(fixture: &[FixtureQuery]) -> Ratio<u64> {
    let mut sum = Ratio::from_integer(0u64);
    let mut total = 0u64;
    for (order, truths) in fixture {
        for &(w, m) in truths {
            total += u64::from(m);
            if let Some(o) = order {
                let rank = o.iter().position(|&x| x == w).unwrap() as u64 + 1;
                sum += Ratio::new(u64::from(m), rank);
            }
        }
    }
    sum / total
}

/// PR / (βP + (1−β)R) in exact arithmetic.
pub fn rational_f1(p: Ratio<u64>, r: Ratio<u64>, beta: Ratio<u64>) -> Ratio<u64> {
    let one = Ratio::from_integer(1u64);
    p * r / (beta * p + (one - beta) * r)
}

/// Whether `x` is within `ulps` units in the last place of `r`.
pub fn close_to_ratio(x: f64, r: Ratio<u64>, ulps: u32) -> bool {
    let target = ratio_f64(r);
    let diff = (x - target).abs();
    diff <= f64::EPSILON * target.abs() * f64::from(ulps)
}

/// `n` sequences of 1..=max_len ids drawn from `words` recommendable words,
/// with UNK mixed in at rate 1/20.
pub fn random_id_corpus(seed: u64, n: usize, words: usize, max_len: usize) -> Vec<Vec<WordId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len)
                .map(|_| {
                    if rng.gen_ratio(1, 20) {
                        nextword::UNK
                    } else {
                        // skew toward low ids so some n-grams repeat
                        let a = rng.gen_range(0..words);
                        let b = rng.gen_range(0..words);
                        (a.min(b) + 2) as WordId
                    }
                })
                .collect()
        })
        .collect()
}

/// Every proper prefix of every sequence, plus `extra` random contexts.
pub fn contexts_of(
    sequences: &[Vec<WordId>],
    words: usize,
    extra: usize,
    seed: u64,
) -> Vec<Vec<WordId>> {
    let mut out: Vec<Vec<WordId>> = sequences
        .iter()
        .flat_map(|s| (1..s.len()).map(move |k| s[..k].to_vec()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let len = rng.gen_range(1..=4);
        out.push(random_words(&mut rng, len, words + 2, false));
    }
    out.sort();
    out.dedup();
    out
}
