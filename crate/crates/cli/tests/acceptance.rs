//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria listed in `EXPECTED_FAILURES` cannot be met as stated; they are
//! still computed and printed, and only an unexpected outcome (a failure
//! elsewhere, or one of them passing) makes the run fail.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nextword::eval::{f1_at_k, sparsity_rate, MetricsReport, DEFAULT_BETA};
use nextword::hybrid::{interpolate2, MixtureWeights};
use nextword::neural::{context_weights, ContextWeighting};
use nextword::ngram::{prob_mle, MleOptions, NGramModel, NGramTable};
use nextword::{Distribution, LanguageModel, Prediction, WordId};
use nextword_cli::commands;
use nextword_cli::config::{Combination, ExperimentConfig, ModelKind, Profile, Target};
use nextword_cli::models::{build_target, load_model, ModelCache};
use nextword_cli::synth;
use nextword_cli::workdir::Workdir;
use num_rational::Ratio;
use support::*;

const EXPECTED_FAILURES: &[&str] = &["f1-consistency"];

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn kn_normalization() -> Check {
    let start = Instant::now();
    let words = 50;
    let corpus = random_id_corpus(11, 200, words, 10);
    let model = NGramModel::kneser_ney(NGramTable::count_ngrams(&corpus, 3, words + 2)).unwrap();
    let mut contexts = contexts_of(&corpus, words, 600, 12);
    contexts.truncate(1000);
    let mut worst: f64 = 0.0;
    let mut abstained = 0;
    for ctx in &contexts {
        match model.predict(ctx) {
            Prediction::Distribution(d) => worst = worst.max((d.sum() - 1.0).abs()),
            Prediction::NoRecommendation => abstained += 1,
        }
    }
    let t = start.elapsed();
    check(
        "kn-normalization",
        contexts.len() == 1000 && abstained == 0 && worst <= 1e-9 && t < Duration::from_secs(5),
        format!("{} contexts, max |sum - 1| = {worst:.1e}, {abstained} abstentions, {}", contexts.len(), secs(t)),
    )
}

fn counting_oracle() -> Check {
    let start = Instant::now();
    let words = 12;
    let corpus = random_id_corpus(3, 50, words, 8);
    let vocab = words + 2;
    let contexts = contexts_of(&corpus, words, 60, 4);
    let (mut pairs, mut mismatches) = (0usize, 0usize);
    for order in [2, 3] {
        let table = NGramTable::count_ngrams(&corpus, order, vocab);
        for backoff in [true, false] {
            let opts = MleOptions {
                backoff,
                unigram_fallback: false,
            };
            for ctx in &contexts {
                for w in 2..vocab as WordId {
                    pairs += 1;
                    let expected = brute_force_mle(&corpus, order, ctx, w, backoff).map(ratio_f64);
                    if prob_mle(&table, ctx, w, opts) != expected {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    check(
        "counting-oracle",
        mismatches == 0 && t < Duration::from_secs(5),
        format!("{pairs} (context, word) pairs, {mismatches} mismatches, {}", secs(t)),
    )
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let mut worst = Vec::new();
    let families: [(&str, fn(u64) -> f64); 4] = [
        ("nlm", nlm_gradient_error),
        ("cbow", cbow_gradient_error),
        ("rnn", rnn_gradient_error),
        ("lstm", lstm_gradient_error),
    ];
    let mut pass = true;
    for (name, f) in families {
        let e = GRADIENT_SEEDS.iter().map(|&s| f(s)).fold(0.0, f64::max);
        pass &= e < FD_TOLERANCE;
        worst.push(format!("{name} {e:.1e}"));
    }
    let t = start.elapsed();
    check(
        "gradient-suite",
        pass && t < Duration::from_secs(60),
        format!("max relative error per family over {} seeds: {}, {}", GRADIENT_SEEDS.len(), worst.join(", "), secs(t)),
    )
}

fn metric_oracle() -> Check {
    let vocab = fixture_vocab();
    let fixture = metric_fixture();
    let (model, queries) = fixture_model(&fixture);
    let s = nextword::eval::score(&model, &queries, &vocab).unwrap();
    let p = |k| nextword::eval::precision_at_k(&s, k).unwrap();
    let r = |k| nextword::eval::recall_at_k(&s, k).unwrap();
    let mut failures = Vec::new();
    let mut expect = |name: &str, got: f64, want: Ratio<u64>| {
        if !close_to_ratio(got, want, 4) {
            failures.push(format!("{name} = {got}, expected {want}"));
        }
    };
    let exact1 = rational_at_k(&fixture, &vocab, 1);
    let exact2 = rational_at_k(&fixture, &vocab, 2);
    let exact3 = rational_at_k(&fixture, &vocab, 3);
    expect("P@1", p(1), exact1.precision.unwrap());
    expect("P@3", p(3), exact3.precision.unwrap());
    expect("R@2", r(2), exact2.recall);
    expect("R@3", r(3), exact3.recall);
    expect("SW@3", nextword::eval::saved_words(&s, 3).unwrap(), exact3.recall);
    expect("SC@3", nextword::eval::saved_chars(&s, 3).unwrap(), exact3.saved_chars);
    expect(
        "F1@3",
        f1_at_k(p(3), r(3), DEFAULT_BETA),
        rational_f1(exact3.precision.unwrap(), exact3.recall, Ratio::new(2, 3)),
    );
    expect("MAP", nextword::eval::mean_average_precision(&s).unwrap(), rational_map(&fixture));
    // hand-enumerated values of the same fixture
    expect("P@1 (hand)", p(1), Ratio::new(1, 2));
    expect("P@3 (hand)", p(3), Ratio::new(3, 4));
    expect("R@2 (hand)", r(2), Ratio::new(7, 11));
    expect("R@3 (hand)", r(3), Ratio::new(9, 11));
    expect("MAP (hand)", nextword::eval::mean_average_precision(&s).unwrap(), Ratio::new(16, 33));

    let single = |fx: &[FixtureQuery]| {
        let (m, q) = fixture_model(fx);
        nextword::eval::score(&m, &q, &vocab).unwrap()
    };
    let q1 = single(&fixture[..1]);
    expect("worked P@3", nextword::eval::precision_at_k(&q1, 3).unwrap(), Ratio::new(2, 3));
    expect("worked MAP", nextword::eval::mean_average_precision(&q1).unwrap(), Ratio::new(2, 3));
    let sc = single(&[(Some([Y, X, Z, U, V, T]), vec![(Y, 1), (Z, 1)])]);
    expect("worked SC", nextword::eval::saved_chars(&sc, 2).unwrap(), Ratio::new(2, 5));
    let detail = if failures.is_empty() {
        "P@{1,3}, R@{2,3}, F1, MAP, SW, SC and worked values 2/3, 2/3, 2/5 all exact".to_string()
    } else {
        failures.join("; ")
    };
    check("metric-oracle", failures.is_empty(), detail)
}

fn f1_consistency() -> Check {
    let f1 = f1_at_k(3.414, 29.766, DEFAULT_BETA);
    let implied = f1_at_k(3.414, 29.766, 0.67);
    check(
        "f1-consistency",
        (f1 - 8.39).abs() <= 0.01,
        format!("beta 2/3 gives {f1:.3} against reported 8.391 (beta 0.67 would give {implied:.3})"),
    )
}

fn weighted_cbow_weights() -> Check {
    let mut worst: f64 = 0.0;
    for l in 1..=10 {
        let w = context_weights(l, l, ContextWeighting::Position);
        worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    // oldest first, so reverse for nearest to farthest
    let mut triple = context_weights(3, 3, ContextWeighting::Position);
    triple.reverse();
    let want = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 2.0];
    let triple_ok = triple.iter().zip(want).all(|(a, b)| (a - b).abs() <= 1e-15);
    check(
        "weighted-cbow-weights",
        worst <= 1e-12 && triple_ok,
        format!("max |sum - 1| over L = 1..10 is {worst:.1e}; L = 3 nearest to farthest {triple:?}"),
    )
}

/// Endpoint rows of a sweep table: every grid corner.
fn endpoint_rows(table: &[(MixtureWeights, MetricsReport)]) -> Vec<&MetricsReport> {
    table
        .iter()
        .filter(|(w, _)| w.values().contains(&1.0))
        .map(|(_, r)| r)
        .collect()
}

fn hybrid_reductions(sweeps: &[(String, f64, Vec<f64>)]) -> Check {
    let mut exact = true;
    for seed in 0..20u64 {
        let mk = |s: u64| {
            let w: Vec<f64> = (0..12).map(|i| ((s * 31 + i * 17) % 13) as f64 + 0.5).collect();
            Prediction::Distribution(Distribution::from_weights(w).unwrap())
        };
        let (a, b) = (mk(seed), mk(seed + 100));
        exact &= interpolate2(&a, &b, 1.0).unwrap() == a;
        exact &= interpolate2(&a, &b, 0.0).unwrap() == b;
    }
    let dominated: Vec<String> = sweeps
        .iter()
        .filter(|(_, best, ends)| ends.iter().any(|e| e > best))
        .map(|(n, _, _)| n.clone())
        .collect();
    check(
        "hybrid-reductions",
        exact && dominated.is_empty() && !sweeps.is_empty(),
        format!(
            "lambda 0/1 bit-exact: {exact}; tuned optimum >= every endpoint in {}/{} sweeps",
            sweeps.len() - dominated.len(),
            sweeps.len()
        ),
    )
}

fn pipeline_config(corpus: &Path, workdir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Profile::Desk);
    cfg.set("corpus", &corpus.to_string_lossy()).unwrap();
    cfg.set("workdir", &workdir.to_string_lossy()).unwrap();
    cfg.set("seed", "1").unwrap();
    cfg
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// The resolved config records its own workdir; mask it before comparing.
fn without_path(bytes: &[u8], dir: &Path) -> Vec<u8> {
    String::from_utf8_lossy(bytes)
        .replace(dir.to_string_lossy().as_ref(), "<workdir>")
        .into_bytes()
}

struct PipelineResults {
    checks: Vec<Check>,
    sweeps: Vec<(String, f64, Vec<f64>)>,
}

fn pipeline() -> PipelineResults {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("synthetic.txt");
    let base = ExperimentConfig::new(Profile::Desk);
    let params = synth::SynthParams {
        seed: 1,
        ..base.synth_params().unwrap()
    };
    std::fs::write(&corpus, synth::generate(&params).unwrap()).unwrap();

    let (dir_a, dir_b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = pipeline_config(&corpus, &dir_a);
    let start = Instant::now();
    commands::run(&cfg, &Workdir::new(&dir_a), &mut |_| {}).unwrap();
    let elapsed = start.elapsed();
    commands::run(&pipeline_config(&corpus, &dir_b), &Workdir::new(&dir_b), &mut |_| {}).unwrap();

    let (files_a, files_b) = (files_under(&dir_a), files_under(&dir_b));
    let differing: Vec<String> = files_a
        .keys()
        .chain(files_b.keys())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .filter(|k| {
            let a = files_a.get(*k).map(|b| without_path(b, &dir_a));
            let b = files_b.get(*k).map(|b| without_path(b, &dir_b));
            a != b
        })
        .map(|k| k.display().to_string())
        .collect();
    let mut checks = Vec::new();
    checks.push(check(
        "determinism",
        differing.is_empty() && !files_a.is_empty(),
        format!(
            "{} files compared across two seeded runs, {} differ{}",
            files_a.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) }
        ),
    ));

    let wd = Workdir::new(&dir_a);
    let vocab = commands::load_vocab(&wd).unwrap();
    let test = commands::load_queries(&wd, "test", &vocab).unwrap();
    let valid = commands::load_queries(&wd, "valid", &vocab).unwrap();
    let ngram = load_model(&wd, ModelKind::Ngram, &vocab).unwrap();
    let nlm = load_model(&wd, ModelKind::Nlm, &vocab).unwrap();
    let sparsity = |m: &dyn LanguageModel| {
        let scored = nextword::eval::score(m, &test, &vocab).unwrap();
        sparsity_rate(&test, &scored)
    };
    let (sn, sd) = (sparsity(&ngram), sparsity(&nlm));
    let per_bucket: Vec<String> = sn
        .by_count
        .iter()
        .zip(&sd.by_count)
        .map(|(a, b)| format!("{:.3}>{:.3}", a.rate().unwrap_or(f64::NAN), b.rate().unwrap_or(f64::NAN)))
        .collect();
    let sparsity_ok = sn
        .by_count
        .iter()
        .zip(&sd.by_count)
        .all(|(a, b)| matches!((a.rate(), b.rate()), (Some(x), Some(y)) if x > y));

    let map_on_valid = |m: &dyn LanguageModel| MetricsReport::evaluate(m, &valid, &vocab).unwrap().map;
    let mut cache = ModelCache::new(&wd, &vocab);
    let hybrid_target = Target::Mixture(Combination::parse("nlm+ngram").unwrap());
    let (hybrid, _) = build_target(&cfg, &wd, &mut cache, &hybrid_target).unwrap();
    let (mh, mn, md) = (map_on_valid(hybrid.as_ref()), map_on_valid(&ngram), map_on_valid(&nlm));
    let in_time = elapsed < Duration::from_secs(600);
    checks.push(check(
        "directional-reproduction",
        sparsity_ok && mh >= mn && mh >= md && in_time,
        format!(
            "(a) ngram vs nlm no-recommendation rate by context words 1..5: {}; (b) validation MAP hybrid {mh:.4} vs ngram {mn:.4}, nlm {md:.4}; pipeline {}",
            per_bucket.join(" "),
            secs(elapsed)
        ),
    ));

    let mut sweeps = Vec::new();
    for c in cfg.combinations().unwrap() {
        let r = commands::tune(&cfg, &wd, &c).unwrap();
        let objective = r.objective;
        let ends = endpoint_rows(&r.table).iter().map(|m| objective.of(m)).collect();
        sweeps.push((c.name(), objective.of(r.best_report()), ends));
    }
    PipelineResults { checks, sweeps }
}

fn main() -> ExitCode {
    let mut checks = vec![
        kn_normalization(),
        counting_oracle(),
        gradient_suite(),
        metric_oracle(),
        f1_consistency(),
        weighted_cbow_weights(),
    ];
    let p = pipeline();
    checks.push(hybrid_reductions(&p.sweeps));
    checks.extend(p.checks);

    let mut unexpected = 0;
    for c in &checks {
        let expected_failure = EXPECTED_FAILURES.contains(&c.name);
        let label = match (c.pass, expected_failure) {
            (true, false) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (expected)",
            (true, true) => "XPASS",
        };
        if c.pass == expected_failure {
            unexpected += 1;
        }
        println!("{label:<16} {:<26} {}", c.name, c.detail);
    }
    println!(
        "{} criteria, {} passed, {} expected failures, {} unexpected outcomes",
        checks.len(),
        checks.iter().filter(|c| c.pass).count(),
        checks.iter().filter(|c| !c.pass && EXPECTED_FAILURES.contains(&c.name)).count(),
        unexpected
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
