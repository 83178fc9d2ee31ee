//! Feedforward neural probabilistic language model:
//! y = b + W·x + U·tanh(b_h + H·x), with x the concatenated embeddings of
//! the previous n−1 words (oldest first), followed by a softmax.

use rand::Rng;

use super::tensor::{axpy, Matrix, Parameters};
use crate::lm::{Distribution, WordId, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct NlmParams {
    /// Word feature vectors, |V| × d.
    pub c: Matrix,
    /// Hidden weights, h × (n−1)d.
    pub h: Matrix,
    pub b_h: Matrix,
    /// Hidden-to-output weights, |V| × h.
    pub u: Matrix,
    /// Direct feature-to-output weights, |V| × (n−1)d.
    pub w: Matrix,
    pub b: Matrix,
    /// Context length n−1.
    pub window: usize,
}

/// Activations kept for the backward pass.
pub struct NlmCache {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub probs: Distribution,
}

impl NlmParams {
    pub fn zeros(vocab: usize, dim: usize, window: usize, hidden: usize) -> Self {
        let input = window * dim;
        Self {
            c: Matrix::zeros(vocab, dim),
            h: Matrix::zeros(hidden, input),
            b_h: Matrix::zeros(1, hidden),
            u: Matrix::zeros(vocab, hidden),
            w: Matrix::zeros(vocab, input),
            b: Matrix::zeros(1, vocab),
            window,
        }
    }

    /// Weights uniform in [−scale, scale], biases zero.
    pub fn init<R: Rng + ?Sized>(
        vocab: usize,
        dim: usize,
        window: usize,
        hidden: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let input = window * dim;
        Self {
            c: Matrix::uniform(vocab, dim, scale, rng),
            h: Matrix::uniform(hidden, input, scale, rng),
            b_h: Matrix::zeros(1, hidden),
            u: Matrix::uniform(vocab, hidden, scale, rng),
            w: Matrix::uniform(vocab, input, scale, rng),
            b: Matrix::zeros(1, vocab),
            window,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.c.rows()
    }

    pub fn dim(&self) -> usize {
        self.c.cols()
    }

    pub fn hidden(&self) -> usize {
        self.h.rows()
    }

    /// The last n−1 words of a history, left-padded with sentence start.
    pub fn window_of(&self, history: &[WordId]) -> Vec<WordId> {
        let keep = history.len().min(self.window);
        let mut out = vec![PAD; self.window - keep];
        out.extend_from_slice(&history[history.len() - keep..]);
        out
    }

    pub fn forward(&self, window: &[WordId]) -> NlmCache {
        assert_eq!(window.len(), self.window, "context must have n-1 words");
        let d = self.dim();
        let mut x = Vec::with_capacity(self.window * d);
        for &w in window {
            x.extend_from_slice(self.c.row(w as usize));
        }
        let mut a = self.b_h.row(0).to_vec();
        self.h.add_mul_vec(&x, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        let mut y = self.b.row(0).to_vec();
        self.w.add_mul_vec(&x, &mut y);
        self.u.add_mul_vec(&a, &mut y);
        let probs = Distribution::from_logits(&y).expect("vocabulary has no recommendable words");
        NlmCache { x, a, probs }
    }

    /// Adds `scale · ∂(−ln p(target))/∂θ` into `grads`.
    pub fn backward(
        &self,
        window: &[WordId],
        cache: &NlmCache,
        target: WordId,
        scale: f64,
        grads: &mut NlmParams,
    ) {
        let mut dy: Vec<f64> = cache.probs.probs().iter().map(|p| p * scale).collect();
        dy[target as usize] -= scale;

        axpy(1.0, &dy, grads.b.row_mut(0));
        grads.w.add_outer(&dy, &cache.x);
        grads.u.add_outer(&dy, &cache.a);

        let mut da = vec![0.0; self.hidden()];
        self.u.add_tmul_vec(&dy, &mut da);
        let dz: Vec<f64> = da
            .iter()
            .zip(&cache.a)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        axpy(1.0, &dz, grads.b_h.row_mut(0));
        grads.h.add_outer(&dz, &cache.x);

        let mut dx = vec![0.0; cache.x.len()];
        self.w.add_tmul_vec(&dy, &mut dx);
        self.h.add_tmul_vec(&dz, &mut dx);
        let d = self.dim();
        for (j, &w) in window.iter().enumerate() {
            axpy(1.0, &dx[j * d..(j + 1) * d], grads.c.row_mut(w as usize));
        }
    }

    /// Mean negative log-likelihood of the batch plus ½·λ·‖(W,U,H,C)‖²,
    /// and its gradient. Each example is (window of n−1 ids, target).
    pub fn loss_and_grad(&self, batch: &[(Vec<WordId>, WordId)], decay: f64) -> (f64, NlmParams) {
        assert!(!batch.is_empty(), "batch must not be empty");
        let mut grads = self.zeroed();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (window, target) in batch {
            let cache = self.forward(window);
            loss -= cache.probs.prob(*target).ln();
            self.backward(window, &cache, *target, scale, &mut grads);
        }
        self.add_decay_grad(&mut grads, decay);
        (loss * scale + self.decay_penalty(decay), grads)
    }
}

impl Parameters for NlmParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("C", &self.c),
            ("H", &self.h),
            ("b_h", &self.b_h),
            ("U", &self.u),
            ("W", &self.w),
            ("b", &self.b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.c,
            &mut self.h,
            &mut self.b_h,
            &mut self.u,
            &mut self.w,
            &mut self.b,
        ]
    }
}
