//! The pipeline stages: prepare, train, tune, eval, report and run.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nextword::corpus::{self, EvalQuery, RawCorpus, Vocabulary};
use nextword::eval::{
    format_table, overlap_rate, overlap_tsv, sparsity_rate, sparsity_tsv, MetricsReport,
    ScoredQuery, SparsityReport, DEFAULT_BETA,
};
use nextword::hybrid::{combine, predict_all, tune_lambda, TuneResult};
use nextword::neural::{NeuralModel, TrainReport};
use nextword::ngram::{NGramModel, NGramTable};
use nextword::{Error, Prediction, WordId};

use crate::config::{Combination, ExperimentConfig, ModelKind, Target};
use crate::models::{mixture_weights, ModelCache};
use crate::workdir::{read_text, write_atomic, Workdir};

pub const PARTS: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrepareSummary {
    pub sequences: [usize; 3],
    pub vocabulary: usize,
    pub queries: [usize; 2],
}

fn read_corpus(path: &Path) -> Result<RawCorpus> {
    if !path.exists() {
        bail!("corpus file {} does not exist", path.display());
    }
    let raw = RawCorpus::read(path).with_context(|| format!("reading corpus {}", path.display()))?;
    Ok(raw.preprocessed())
}

pub fn prepare(cfg: &ExperimentConfig, wd: &Workdir) -> Result<PrepareSummary> {
    let path = cfg.corpus()?;
    let raw = read_corpus(&path)?;
    let split = corpus::split(raw.len(), cfg.seed()?)
        .with_context(|| format!("splitting {}", path.display()))?;
    let train = raw.select(&split.train);
    let vocab = Vocabulary::build(&train, cfg.min_count()?)
        .with_context(|| format!("building the vocabulary from {}", path.display()))?;

    write_atomic(&wd.vocab(), vocab.to_tsv().as_bytes())?;
    for (part, idx) in PARTS.iter().zip([&split.train, &split.valid, &split.test]) {
        write_atomic(&wd.manifest(part), corpus::manifest_to_string(idx).as_bytes())?;
    }
    let mut queries = [0; 2];
    for (i, (part, idx)) in [("valid", &split.valid), ("test", &split.test)].into_iter().enumerate() {
        let q = corpus::make_queries(&raw.select(idx), &vocab);
        queries[i] = q.len();
        write_atomic(&wd.queries(part), corpus::queries_to_tsv(&q, &vocab).as_bytes())?;
    }
    write_atomic(&wd.resolved_config(), cfg.to_text().as_bytes())?;
    Ok(PrepareSummary {
        sequences: [split.train.len(), split.valid.len(), split.test.len()],
        vocabulary: vocab.len(),
        queries,
    })
}

pub fn load_vocab(wd: &Workdir) -> Result<Vocabulary> {
    let path = wd.vocab();
    if !path.exists() {
        bail!("{} is missing; run `nextword prepare` first", path.display());
    }
    Vocabulary::from_tsv(&read_text(&path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_queries(wd: &Workdir, part: &str, vocab: &Vocabulary) -> Result<Vec<EvalQuery>> {
    let path = wd.queries(part);
    if !path.exists() {
        bail!("{} is missing; run `nextword prepare` first", path.display());
    }
    corpus::queries_from_tsv(&read_text(&path)?, vocab)
        .with_context(|| format!("parsing {}", path.display()))
}

fn training_sequences(cfg: &ExperimentConfig, wd: &Workdir, vocab: &Vocabulary) -> Result<Vec<Vec<WordId>>> {
    let manifest = wd.manifest("train");
    let idx = corpus::manifest_from_str(&read_text(&manifest)?)
        .with_context(|| format!("parsing {}", manifest.display()))?;
    let raw = read_corpus(&cfg.corpus()?)?;
    if let Some(&bad) = idx.iter().find(|&&i| i >= raw.len()) {
        bail!(
            "{} refers to sequence {bad} but the corpus has {}; rerun prepare",
            manifest.display(),
            raw.len()
        );
    }
    Ok(vocab.encode_corpus(&raw.select(&idx)))
}

/// Trains one model and writes its file. Neural models return their
/// per-epoch losses.
pub fn train(cfg: &ExperimentConfig, wd: &Workdir, kind: ModelKind) -> Result<Option<TrainReport>> {
    let vocab = load_vocab(wd)?;
    let seqs = training_sequences(cfg, wd, &vocab)?;
    let path = wd.model(kind.name());
    if kind.is_ngram() {
        let table = NGramTable::count_ngrams(&seqs, cfg.ngram_order()?, vocab.len());
        let model = match kind {
            ModelKind::Ngram => NGramModel::mle(table, cfg.mle_options()?),
            _ => NGramModel::kneser_ney(table)?,
        };
        write_atomic(&path, model.to_text(&vocab).as_bytes())?;
        Ok(None)
    } else {
        let arch = cfg.architecture(kind)?;
        let (model, report) = NeuralModel::train(arch, &seqs, vocab.len(), &cfg.train_config()?)
            .with_context(|| format!("training {kind}"))?;
        write_atomic(&path, &model.to_bytes())?;
        Ok(Some(report))
    }
}

pub fn tune(cfg: &ExperimentConfig, wd: &Workdir, c: &Combination) -> Result<TuneResult> {
    let vocab = load_vocab(wd)?;
    let queries = load_queries(wd, "valid", &vocab)?;
    let mut cache = ModelCache::new(wd, &vocab);
    let components = c
        .components()
        .into_iter()
        .map(|k| Ok(predict_all(&cache.get(k)?, &queries)?))
        .collect::<Result<Vec<_>>>()?;
    let result = tune_lambda(&components, &queries, &vocab, cfg.objective()?, cfg.tune_step()?)
        .with_context(|| format!("tuning {}", c.name()))?;
    write_atomic(&wd.weights(&c.name()), format!("{}\n", result.best_weights().to_tsv()).as_bytes())?;
    write_atomic(&wd.sweep(&c.name()), result.to_tsv().as_bytes())?;
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub rows: Vec<(String, MetricsReport)>,
    pub sparsity: Vec<(String, SparsityReport)>,
    pub overlap: Vec<Vec<Option<f64>>>,
    /// Mixtures evaluated with untuned default weights.
    pub untuned: Vec<String>,
}

fn top_set(p: &Prediction, k: usize) -> Result<Option<Vec<WordId>>> {
    Ok(match p.distribution() {
        Some(d) => {
            let mut words: Vec<WordId> = d.top_k(k)?.words().collect();
            words.sort_unstable();
            Some(words)
        }
        None => None,
    })
}

/// Scores every target on the `part` queries and writes the metrics table,
/// sparsity and overlap files under `eval/<part>/`.
pub fn eval(cfg: &ExperimentConfig, wd: &Workdir, targets: &[Target], part: &str) -> Result<EvalOutput> {
    let vocab = load_vocab(wd)?;
    let queries = load_queries(wd, part, &vocab)?;
    let k = cfg.eval_k()?;
    let mode = cfg.overlap_mode()?;
    let mut cache = ModelCache::new(wd, &vocab);

    let mut predictions: BTreeMap<ModelKind, Vec<Prediction>> = BTreeMap::new();
    for t in targets {
        for kind in t.kinds() {
            if let Entry::Vacant(slot) = predictions.entry(kind) {
                slot.insert(predict_all(&cache.get(kind)?, &queries)?);
            }
        }
    }

    let mut rows = Vec::new();
    let mut sparsity = Vec::new();
    let mut sets = Vec::new();
    let mut untuned = Vec::new();
    for t in targets {
        let name = t.name();
        let mut scored = Vec::with_capacity(queries.len());
        let mut top = Vec::with_capacity(queries.len());
        let mut add = |p: &Prediction, q: &EvalQuery| -> Result<()> {
            scored.push(ScoredQuery::new(p, q, &vocab));
            top.push(top_set(p, k)?);
            Ok(())
        };
        match t {
            Target::Model(kind) => {
                for (p, q) in predictions[kind].iter().zip(&queries) {
                    add(p, q)?;
                }
            }
            Target::Mixture(c) => {
                let (w, source) = mixture_weights(cfg, wd, c)?;
                if source == crate::models::WeightSource::Default {
                    untuned.push(name.clone());
                }
                let parts: Vec<&Vec<Prediction>> =
                    c.components().iter().map(|kind| &predictions[kind]).collect();
                for (qi, q) in queries.iter().enumerate() {
                    let refs: Vec<&Prediction> = parts.iter().map(|p| &p[qi]).collect();
                    add(&combine(&refs, &w)?, q)?;
                }
            }
        }
        let report = MetricsReport::from_scored(&scored, DEFAULT_BETA)
            .with_context(|| format!("evaluating {name} on {part} queries"))?;
        rows.push((name.clone(), report));
        sparsity.push((name, sparsity_rate(&queries, &scored)));
        sets.push(top);
    }

    let n = sets.len();
    let mut overlap = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            overlap[i][j] = match overlap_rate(&sets[i], &sets[j], k, mode) {
                Ok(v) => Some(v),
                Err(Error::NoComparableQueries) => None,
                Err(e) => return Err(e.into()),
            };
            overlap[j][i] = overlap[i][j];
        }
    }

    let dir = wd.eval_dir(part);
    let mut metrics = String::from(MetricsReport::TSV_HEADER);
    metrics.push('\n');
    for (name, r) in &rows {
        metrics.push_str(&r.tsv_row(name));
        metrics.push('\n');
    }
    let names: Vec<String> = rows.iter().map(|(n, _)| n.clone()).collect();
    write_atomic(&dir.join("metrics.tsv"), metrics.as_bytes())?;
    write_atomic(&dir.join("table.txt"), format_table(&rows).as_bytes())?;
    write_atomic(&dir.join("sparsity.tsv"), sparsity_tsv(&sparsity).as_bytes())?;
    write_atomic(&dir.join("overlap.tsv"), overlap_tsv(&names, &overlap).as_bytes())?;
    Ok(EvalOutput {
        rows,
        sparsity,
        overlap,
        untuned,
    })
}

/// Human-readable summary of the files written by `eval` and `tune`.
pub fn report(wd: &Workdir, part: &str) -> Result<String> {
    let dir = wd.eval_dir(part);
    let table = dir.join("table.txt");
    if !table.exists() {
        bail!("{} is missing; run `nextword eval` first", table.display());
    }
    let mut out = String::new();
    let _ = writeln!(out, "== metrics on {part} queries (percent) ==");
    out.push_str(&read_text(&table)?);
    let _ = writeln!(out, "\n== no-recommendation rate by bucket ==");
    out.push_str(&read_text(&dir.join("sparsity.tsv"))?);
    let _ = writeln!(out, "\n== top-K overlap ==");
    out.push_str(&read_text(&dir.join("overlap.tsv"))?);

    let tune_dir = wd.root().join("tune");
    if tune_dir.is_dir() {
        let mut weights: Vec<_> = std::fs::read_dir(&tune_dir)
            .with_context(|| format!("listing {}", tune_dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "weights"))
            .collect();
        weights.sort();
        if !weights.is_empty() {
            let _ = writeln!(out, "\n== tuned mixture weights ==");
        }
        for p in weights {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let _ = writeln!(out, "{name}\t{}", read_text(&p)?.trim().replace('\n', "\t"));
        }
    }
    Ok(out)
}

/// prepare → train every model → tune every combination → eval on the
/// validation and test queries.
pub fn run(cfg: &ExperimentConfig, wd: &Workdir, log: &mut dyn FnMut(&str)) -> Result<()> {
    let s = prepare(cfg, wd)?;
    log(&format!(
        "prepared: {}/{}/{} sequences, {} words, {}/{} queries",
        s.sequences[0], s.sequences[1], s.sequences[2], s.vocabulary, s.queries[0], s.queries[1]
    ));
    let targets = cfg.eval_targets()?;
    let mut kinds: Vec<ModelKind> = targets.iter().flat_map(Target::kinds).collect();
    let combos = cfg.combinations()?;
    kinds.extend(combos.iter().flat_map(Combination::components));
    kinds.sort_unstable();
    kinds.dedup();
    for kind in kinds {
        let report = train(cfg, wd, kind)?;
        match report.and_then(|r| r.epoch_losses.last().copied()) {
            Some(loss) => log(&format!("trained {kind}: final epoch loss {loss:.4}")),
            None => log(&format!("trained {kind}")),
        }
    }
    for c in &combos {
        let r = tune(cfg, wd, c)?;
        log(&format!(
            "tuned {}: {} (validation {} {:.4})",
            c.name(),
            r.best_weights().to_tsv().replace('\t', " "),
            r.objective.name(),
            r.objective.of(r.best_report())
        ));
    }
    for part in ["valid", "test"] {
        eval(cfg, wd, &targets, part)?;
        log(&format!("evaluated {} targets on {part} queries", targets.len()));
    }
    Ok(())
}
