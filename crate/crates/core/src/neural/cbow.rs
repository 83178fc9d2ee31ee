//! Left-context CBOW trained with negative sampling.
//!
//! The context vector u averages the input vectors of the previous L words
//! (or weights them by position). Training maximizes
//! ln σ(v_t·u) + Σ ln σ(−v_n·u) over sampled negatives n; scoring uses a
//! full softmax over v_w·u.

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::Rng;

use super::tensor::{axpy, dot, log_sigmoid, sigmoid, Matrix, Parameters};
use crate::error::{Error, Result};
use crate::lm::{Distribution, WordId, FIRST_WORD};

/// How context vectors are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextWeighting {
    /// Arithmetic mean.
    Mean,
    /// Word at distance k (1 = nearest) weighted 2k / (L(L+1)).
    Position,
    /// Word at distance k weighted by L+1−k, normalized; nearest word dominates.
    ReversedPosition,
}

impl ContextWeighting {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextWeighting::Mean => "mean",
            ContextWeighting::Position => "position",
            ContextWeighting::ReversedPosition => "reversed-position",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(Self::Mean),
            "position" => Some(Self::Position),
            "reversed-position" => Some(Self::ReversedPosition),
            _ => None,
        }
    }
}

/// Weights for `present` context words, oldest first. With a full window
/// and [`ContextWeighting::Position`] these are 2(t−j)/(L(1+L)); shorter
/// contexts renormalize over the positions that exist.
pub fn context_weights(present: usize, window: usize, weighting: ContextWeighting) -> Vec<f64> {
    assert!(present >= 1 && present <= window);
    let raw: Vec<f64> = (0..present)
        .map(|i| {
            // distance from the predicted word: oldest has the largest
            let k = (present - i) as f64;
            match weighting {
                ContextWeighting::Mean => 1.0,
                ContextWeighting::Position => k,
                ContextWeighting::ReversedPosition => window as f64 + 1.0 - k,
            }
        })
        .collect();
    if weighting == ContextWeighting::Position && present == window {
        let denom = (window * (window + 1)) as f64;
        return raw.iter().map(|k| 2.0 * k / denom).collect();
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbowParams {
    /// Context-side vectors v^c, |V| × d.
    pub input: Matrix,
    /// Word-side vectors v, |V| × d.
    pub output: Matrix,
    pub window: usize,
    pub negatives: usize,
    pub weighting: ContextWeighting,
}

/// Per-example quantities shared by the dense gradient and the sparse
/// training update.
struct Terms {
    loss: f64,
    u: Vec<f64>,
    weights: Vec<f64>,
    /// ∂loss/∂v_w = coeff · u for each scored output word.
    out: Vec<(WordId, f64)>,
    /// ∂loss/∂u
    du: Vec<f64>,
}

impl CbowParams {
    pub fn zeros(vocab: usize, dim: usize, window: usize, negatives: usize, weighting: ContextWeighting) -> Self {
        Self {
            input: Matrix::zeros(vocab, dim),
            output: Matrix::zeros(vocab, dim),
            window,
            negatives,
            weighting,
        }
    }

    pub fn init<R: Rng + ?Sized>(
        vocab: usize,
        dim: usize,
        window: usize,
        negatives: usize,
        weighting: ContextWeighting,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            input: Matrix::uniform(vocab, dim, scale, rng),
            output: Matrix::uniform(vocab, dim, scale, rng),
            window,
            negatives,
            weighting,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.input.rows()
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    /// The last L words of a history (fewer at the start of a sequence).
    pub fn window_of<'h>(&self, history: &'h [WordId]) -> &'h [WordId] {
        &history[history.len().saturating_sub(self.window)..]
    }

    pub fn context_vector(&self, context: &[WordId]) -> Vec<f64> {
        self.context_and_weights(context).0
    }

    fn context_and_weights(&self, context: &[WordId]) -> (Vec<f64>, Vec<f64>) {
        let weights = context_weights(context.len(), self.window, self.weighting);
        let mut u = vec![0.0; self.dim()];
        for (&w, &a) in context.iter().zip(&weights) {
            axpy(a, self.input.row(w as usize), &mut u);
        }
        (u, weights)
    }

    pub fn distribution(&self, context: &[WordId]) -> Distribution {
        let u = self.context_vector(self.window_of(context));
        let logits: Vec<f64> = (0..self.vocab_size())
            .map(|w| dot(self.output.row(w), &u))
            .collect();
        Distribution::from_logits(&logits).expect("vocabulary has no recommendable words")
    }

    fn terms(&self, context: &[WordId], target: WordId, negatives: &[WordId]) -> Terms {
        let (u, weights) = self.context_and_weights(context);
        let mut du = vec![0.0; self.dim()];
        let mut out = Vec::with_capacity(1 + negatives.len());

        let v = self.output.row(target as usize);
        let score = dot(v, &u);
        let mut loss = -log_sigmoid(score);
        let coeff = sigmoid(score) - 1.0;
        axpy(coeff, v, &mut du);
        out.push((target, coeff));

        for &n in negatives {
            let v = self.output.row(n as usize);
            let score = dot(v, &u);
            loss -= log_sigmoid(-score);
            let coeff = sigmoid(score);
            axpy(coeff, v, &mut du);
            out.push((n, coeff));
        }
        Terms {
            loss,
            u,
            weights,
            out,
            du,
        }
    }

    /// Summed negative-sampling loss over the batch with fixed negatives
    /// (`negatives[i]` belongs to `batch[i]`), and its gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[(Vec<WordId>, WordId)],
        negatives: &[Vec<WordId>],
    ) -> (f64, CbowParams) {
        assert_eq!(batch.len(), negatives.len());
        let mut grads = self.zeroed();
        let mut loss = 0.0;
        for ((context, target), negs) in batch.iter().zip(negatives) {
            let t = self.terms(context, *target, negs);
            loss += t.loss;
            for &(w, coeff) in &t.out {
                axpy(coeff, &t.u, grads.output.row_mut(w as usize));
            }
            for (&w, &a) in context.iter().zip(&t.weights) {
                axpy(a, &t.du, grads.input.row_mut(w as usize));
            }
        }
        (loss, grads)
    }

    /// Draws negatives and computes the loss and gradient for one batch.
    pub fn sampled_loss_and_grad<R: Rng + ?Sized>(
        &self,
        batch: &[(Vec<WordId>, WordId)],
        noise: &NoiseDistribution,
        rng: &mut R,
    ) -> (f64, CbowParams) {
        let negatives: Vec<Vec<WordId>> = batch
            .iter()
            .map(|(_, t)| noise.sample_negatives(self.negatives, *t, rng))
            .collect();
        self.loss_and_grad(batch, &negatives)
    }

    /// One in-place SGD step touching only the rows involved.
    pub(crate) fn sgd_example(
        &mut self,
        context: &[WordId],
        target: WordId,
        negatives: &[WordId],
        lr: f64,
    ) -> f64 {
        let t = self.terms(context, target, negatives);
        for &(w, coeff) in &t.out {
            axpy(-lr * coeff, &t.u, self.output.row_mut(w as usize));
        }
        for (&w, &a) in context.iter().zip(&t.weights) {
            axpy(-lr * a, &t.du, self.input.row_mut(w as usize));
        }
        t.loss
    }
}

impl Parameters for CbowParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("input", &self.input), ("output", &self.output)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.input, &mut self.output]
    }
}

/// Unigram frequencies raised to the 3/4 power over recommendable words.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    index: WeightedIndex<f64>,
}

impl NoiseDistribution {
    pub const POWER: f64 = 0.75;

    pub fn from_frequencies(freq: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = freq
            .iter()
            .skip(FIRST_WORD as usize)
            .map(|&f| (f as f64).powf(Self::POWER))
            .collect();
        let index = WeightedIndex::new(&weights).map_err(|_| {
            Error::InvalidConfig("noise distribution needs a word with positive frequency".into())
        })?;
        Ok(Self { index })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WordId {
        self.index.sample(rng) as WordId + FIRST_WORD
    }

    /// `count` draws, redrawing (a bounded number of times) any that hit
    /// the target word.
    pub fn sample_negatives<R: Rng + ?Sized>(
        &self,
        count: usize,
        target: WordId,
        rng: &mut R,
    ) -> Vec<WordId> {
        (0..count)
            .map(|_| {
                let mut w = self.sample(rng);
                for _ in 0..8 {
                    if w != target {
                        break;
                    }
                    w = self.sample(rng);
                }
                w
            })
            .collect()
    }
}
