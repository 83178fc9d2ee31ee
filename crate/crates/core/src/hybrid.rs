//! Linear interpolation of language models and grid tuning of the mixture
//! weights on validation queries.

use std::fmt::Write as _;

use crate::corpus::{EvalQuery, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{MetricsReport, Objective, ScoredQuery, DEFAULT_BETA};
use crate::lm::{next_distribution, Distribution, LanguageModel, Prediction, WordId};

/// Slack allowed when checking λ1 + λ2 ≤ 1 on grid values.
const WEIGHT_EPS: f64 = 1e-9;

/// λ weighs the first component; (λ1, λ2) weigh the first two and the
/// third gets 1 − λ1 − λ2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixtureWeights {
    Two { lambda: f64 },
    Three { lambda1: f64, lambda2: f64 },
}

impl MixtureWeights {
    pub fn components(&self) -> usize {
        match self {
            MixtureWeights::Two { .. } => 2,
            MixtureWeights::Three { .. } => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = match *self {
            MixtureWeights::Two { lambda } => unit(lambda),
            MixtureWeights::Three { lambda1, lambda2 } => {
                unit(lambda1) && unit(lambda2) && lambda1 + lambda2 <= 1.0 + WEIGHT_EPS
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::WeightOutOfRange(format!("{self:?}")))
        }
    }

    /// Per-component weights.
    pub fn values(&self) -> Vec<f64> {
        match *self {
            MixtureWeights::Two { lambda } => vec![lambda, 1.0 - lambda],
            MixtureWeights::Three { lambda1, lambda2 } => {
                vec![lambda1, lambda2, (1.0 - lambda1 - lambda2).max(0.0)]
            }
        }
    }

    /// `λ` or `λ1 <TAB> λ2`.
    pub fn to_tsv(&self) -> String {
        match self {
            MixtureWeights::Two { lambda } => format!("{lambda}"),
            MixtureWeights::Three { lambda1, lambda2 } => format!("{lambda1}\t{lambda2}"),
        }
    }

    pub fn from_tsv(s: &str) -> Result<Self> {
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::format("mixture weights", 1, "expected a number"))
        };
        let cols: Vec<&str> = s.trim().split('\t').collect();
        let w = match cols[..] {
            [l] => MixtureWeights::Two { lambda: parse(l)? },
            [a, b] => MixtureWeights::Three {
                lambda1: parse(a)?,
                lambda2: parse(b)?,
            },
            _ => return Err(Error::format("mixture weights", 1, "expected 1 or 2 weights")),
        };
        w.validate()?;
        Ok(w)
    }
}

fn same_vocab(a: &Distribution, b: &Distribution) -> Result<()> {
    if a.vocab_size() == b.vocab_size() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(
            "mixed distributions cover different vocabularies".into(),
        ))
    }
}

/// λ·pn + (1−λ)·pd. At λ = 1 or 0 the matching input is returned as is;
/// a lone abstention defers to the other input.
pub fn interpolate2(pn: &Prediction, pd: &Prediction, lambda: f64) -> Result<Prediction> {
    MixtureWeights::Two { lambda }.validate()?;
    let (n, d) = match (pn, pd) {
        (Prediction::NoRecommendation, other) | (other, Prediction::NoRecommendation) => {
            return Ok(other.clone())
        }
        (Prediction::Distribution(n), Prediction::Distribution(d)) => (n, d),
    };
    same_vocab(n, d)?;
    if lambda == 1.0 {
        return Ok(pn.clone());
    }
    if lambda == 0.0 {
        return Ok(pd.clone());
    }
    // pd + λ(pn − pd) leaves pd untouched wherever the inputs agree
    let probs = d
        .probs()
        .iter()
        .zip(n.probs())
        .map(|(&q, &p)| (q + lambda * (p - q)).max(0.0))
        .collect();
    Ok(Prediction::Distribution(Distribution::from_normalized(probs)))
}

/// λ1·pn + λ2·pw + (1−λ1−λ2)·pd. Abstaining components drop out and the
/// remaining weights are renormalized; if those weights are all zero the
/// present components share equally.
pub fn interpolate3(
    pn: &Prediction,
    pw: &Prediction,
    pd: &Prediction,
    lambda1: f64,
    lambda2: f64,
) -> Result<Prediction> {
    let weights = MixtureWeights::Three { lambda1, lambda2 };
    weights.validate()?;
    mix(&[pn, pw, pd], &weights.values())
}

/// Convex combination of the present components with the given weights.
fn mix(parts: &[&Prediction], weights: &[f64]) -> Result<Prediction> {
    let present: Vec<(&Distribution, f64)> = parts
        .iter()
        .zip(weights)
        .filter_map(|(p, &w)| p.distribution().map(|d| (d, w)))
        .collect();
    let Some(&(first, _)) = present.first() else {
        return Ok(Prediction::NoRecommendation);
    };
    for (d, _) in &present[1..] {
        same_vocab(first, d)?;
    }
    let total: f64 = present.iter().map(|&(_, w)| w).sum();
    let scaled: Vec<(&Distribution, f64)> = if total > 0.0 {
        present
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(d, w)| (d, w / total))
            .collect()
    } else {
        let share = 1.0 / present.len() as f64;
        present.into_iter().map(|(d, _)| (d, share)).collect()
    };
    if let [(only, _)] = scaled[..] {
        return Ok(Prediction::Distribution(only.clone()));
    }
    let mut probs = vec![0.0; first.vocab_size()];
    for (d, w) in scaled {
        for (acc, &p) in probs.iter_mut().zip(d.probs()) {
            *acc += w * p;
        }
    }
    Ok(Prediction::Distribution(Distribution::from_normalized(probs)))
}

/// Mixes component predictions under the given weights.
pub fn combine(parts: &[&Prediction], weights: &MixtureWeights) -> Result<Prediction> {
    weights.validate()?;
    if parts.len() != weights.components() {
        return Err(Error::InvalidConfig(
            "component count does not match the weights".into(),
        ));
    }
    match *weights {
        MixtureWeights::Two { lambda } => interpolate2(parts[0], parts[1], lambda),
        MixtureWeights::Three { .. } => mix(parts, &weights.values()),
    }
}

/// A fixed-weight mixture of models over one vocabulary.
pub struct Mixture<M> {
    components: Vec<M>,
    weights: MixtureWeights,
}

impl<M: LanguageModel> Mixture<M> {
    pub fn new(components: Vec<M>, weights: MixtureWeights) -> Result<Self> {
        weights.validate()?;
        if components.len() != weights.components() {
            return Err(Error::InvalidConfig(
                "component count does not match the weights".into(),
            ));
        }
        let v = components[0].vocab_size();
        if components.iter().any(|m| m.vocab_size() != v) {
            return Err(Error::InvalidConfig(
                "mixture components use different vocabularies".into(),
            ));
        }
        Ok(Self {
            components,
            weights,
        })
    }

    pub fn weights(&self) -> MixtureWeights {
        self.weights
    }

    pub fn components(&self) -> &[M] {
        &self.components
    }
}

impl<M: LanguageModel> LanguageModel for Mixture<M> {
    fn vocab_size(&self) -> usize {
        self.components[0].vocab_size()
    }

    fn predict(&self, context: &[WordId]) -> Prediction {
        let preds: Vec<Prediction> = self.components.iter().map(|m| m.predict(context)).collect();
        let refs: Vec<&Prediction> = preds.iter().collect();
        combine(&refs, &self.weights).expect("weights and components validated on construction")
    }
}

/// Every weight setting on the grid with its validation metrics; `best`
/// indexes the winner.
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub table: Vec<(MixtureWeights, MetricsReport)>,
    pub best: usize,
    pub objective: Objective,
}

impl TuneResult {
    pub fn best_weights(&self) -> MixtureWeights {
        self.table[self.best].0
    }

    pub fn best_report(&self) -> &MetricsReport {
        &self.table[self.best].1
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let weights = match self.table.first().map(|(w, _)| w.components()) {
            Some(3) => "lambda1\tlambda2",
            _ => "lambda",
        };
        let _ = writeln!(out, "{weights}\tP@1\tP@10\tR@10\tF1\tMAP");
        for (w, r) in &self.table {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                w.to_tsv(),
                r.p1,
                r.p10,
                r.r10,
                r.f1,
                r.map
            );
        }
        out
    }
}

/// Grid points i/n for a step of 1/n.
pub fn grid(step: f64) -> Result<Vec<f64>> {
    let n = (1.0 / step).round();
    if !(step > 0.0 && step <= 1.0) || (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "grid step {step} does not divide 1"
        )));
    }
    let n = n as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

/// Predictions of each component on each query, computed once for tuning.
pub fn predict_all<M: LanguageModel + ?Sized>(
    model: &M,
    queries: &[EvalQuery],
) -> Result<Vec<Prediction>> {
    queries
        .iter()
        .map(|q| next_distribution(model, &q.context))
        .collect()
}

/// Evaluates every grid point and keeps the best by `objective`; ties go
/// to the earliest point, i.e. the smallest λ (λ1 first, then λ2).
/// `components[c][q]` is component c's prediction on query q.
pub fn tune_lambda(
    components: &[Vec<Prediction>],
    queries: &[EvalQuery],
    vocab: &Vocabulary,
    objective: Objective,
    step: f64,
) -> Result<TuneResult> {
    if queries.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    if components.iter().any(|c| c.len() != queries.len()) {
        return Err(Error::InvalidConfig(
            "one prediction per query is required".into(),
        ));
    }
    let values = grid(step)?;
    let points: Vec<MixtureWeights> = match components.len() {
        2 => values
            .iter()
            .map(|&lambda| MixtureWeights::Two { lambda })
            .collect(),
        3 => {
            let n = values.len() - 1;
            let mut pts = Vec::new();
            for i in 0..=n {
                for j in 0..=(n - i) {
                    pts.push(MixtureWeights::Three {
                        lambda1: values[i],
                        lambda2: values[j],
                    });
                }
            }
            pts
        }
        _ => {
            return Err(Error::InvalidConfig(
                "tuning needs two or three components".into(),
            ))
        }
    };

    let evaluate = |w: &MixtureWeights| -> Result<MetricsReport> {
        let mut scored = Vec::with_capacity(queries.len());
        for (qi, q) in queries.iter().enumerate() {
            let parts: Vec<&Prediction> = components.iter().map(|c| &c[qi]).collect();
            scored.push(ScoredQuery::new(&combine(&parts, w)?, q, vocab));
        }
        MetricsReport::from_scored(&scored, DEFAULT_BETA)
    };

    // grid points are independent; results are gathered in grid order
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(points.len());
    let chunk = points.len().div_ceil(workers);
    let reports: Vec<Result<MetricsReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(evaluate).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("tuning worker panicked"))
            .collect()
    });

    let mut table: Vec<(MixtureWeights, MetricsReport)> = Vec::with_capacity(points.len());
    let mut best = 0;
    for (w, r) in points.into_iter().zip(reports) {
        let r = r?;
        if !table.is_empty() && objective.of(&r) > objective.of(&table[best].1) {
            best = table.len();
        }
        table.push((w, r));
    }
    Ok(TuneResult {
        table,
        best,
        objective,
    })
}
