mod support;

use nextword::ngram::{
    estimate_discounts, prob_mle, KnDiscounts, KneserNey, MleOptions, NGramModel, NGramTable,
};
use nextword::{LanguageModel, Prediction, WordId};
use proptest::prelude::*;
use support::*;

#[test]
fn mle_matches_brute_force_scan() {
    let words = 12;
    let corpus = random_id_corpus(3, 50, words, 8);
    let vocab = words + 2;
    let contexts = contexts_of(&corpus, words, 60, 4);
    for order in [2, 3] {
        let table = NGramTable::count_ngrams(&corpus, order, vocab);
        for backoff in [true, false] {
            let opts = MleOptions {
                backoff,
                unigram_fallback: false,
            };
            for ctx in &contexts {
                for w in 2..vocab as WordId {
                    let expected = brute_force_mle(&corpus, order, ctx, w, backoff).map(ratio_f64);
                    assert_eq!(prob_mle(&table, ctx, w, opts), expected, "ctx {ctx:?} w {w}");
                }
            }
        }
    }
}

#[test]
fn kneser_ney_normalizes_on_seen_and_unseen_contexts() {
    let words = 50;
    let corpus = random_id_corpus(11, 200, words, 10);
    let table = NGramTable::count_ngrams(&corpus, 3, words + 2);
    let model = NGramModel::kneser_ney(table).unwrap();
    let mut contexts = contexts_of(&corpus, words, 600, 12);
    contexts.truncate(1000);
    assert_eq!(contexts.len(), 1000);
    for ctx in &contexts {
        let Prediction::Distribution(d) = model.predict(ctx) else {
            panic!("smoothed model abstained on {ctx:?}");
        };
        assert!((d.sum() - 1.0).abs() < 1e-9, "ctx {ctx:?} sums to {}", d.sum());
        assert!(d.probs()[2..].iter().all(|&p| p > 0.0));
        let direct: f64 = (2..(words + 2) as WordId).map(|w| model.prob(ctx, w).unwrap()).sum();
        assert!((direct - 1.0).abs() < 1e-9);
    }
}

#[test]
fn kneser_ney_approaches_mle_as_discount_vanishes() {
    let corpus = random_id_corpus(5, 40, 8, 6);
    let table = NGramTable::count_ngrams(&corpus, 3, 10);
    let opts = MleOptions {
        backoff: false,
        unigram_fallback: false,
    };
    let mut previous = f64::INFINITY;
    for d in [0.1, 0.01, 0.001] {
        let discounts = KnDiscounts::fixed(3, d);
        let kn = KneserNey::new(&table, &discounts, true);
        let mut worst: f64 = 0.0;
        for (gram, _) in table.ngrams(3) {
            let (ctx, w) = gram.split_at(2);
            let mle = prob_mle(&table, ctx, w[0], opts).unwrap();
            worst = worst.max((kn.prob(ctx, w[0]) - mle).abs());
        }
        assert!(worst < previous);
        previous = worst;
    }
    assert!(previous < 0.01);
}

#[test]
fn worked_discount_example() {
    assert_eq!(nextword::ngram::discount_from_count_of_counts(3, 1), 0.6);
    assert_eq!(nextword::ngram::discount_from_count_of_counts(0, 0), 0.5);
    assert_eq!(nextword::ngram::discount_from_count_of_counts(4, 0), 0.5);
    assert_eq!(nextword::ngram::discount_from_count_of_counts(0, 3), 0.0);
}

proptest! {
    #[test]
    fn estimated_discounts_lie_in_unit_interval(seed in 0u64..500, n in 1usize..40) {
        let corpus = random_id_corpus(seed, n, 6, 6);
        let table = NGramTable::count_ngrams(&corpus, 3, 8);
        for &d in estimate_discounts(&table).values() {
            prop_assert!((0.0..1.0).contains(&d));
        }
    }

    #[test]
    fn smoothed_distributions_sum_to_one(seed in 0u64..500, ctx in prop::collection::vec(0u32..9, 1..4)) {
        let corpus = random_id_corpus(seed, 30, 7, 6);
        let model = NGramModel::kneser_ney(NGramTable::count_ngrams(&corpus, 3, 9)).unwrap();
        let d = model.predict(&ctx);
        let d = d.distribution().unwrap();
        prop_assert!((d.sum() - 1.0).abs() < 1e-9);
    }
}
