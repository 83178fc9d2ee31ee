//! Elman-style recurrent model with the input combined by elementwise sum:
//! x = C(w) + h_prev, h = σ(H_R·x), y = O_R·h.

use rand::Rng;

use super::tensor::{axpy, sigmoid, Matrix, Parameters};
use crate::lm::{is_reserved, Distribution, WordId};

#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    /// Word feature vectors, |V| × d.
    pub c: Matrix,
    /// Recurrence, d × d.
    pub h_r: Matrix,
    /// Output weights, |V| × d.
    pub o_r: Matrix,
}

/// Activations of one unrolled step.
struct Step {
    input: WordId,
    x: Vec<f64>,
    h: Vec<f64>,
}

impl RnnParams {
    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self {
            c: Matrix::zeros(vocab, dim),
            h_r: Matrix::zeros(dim, dim),
            o_r: Matrix::zeros(vocab, dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(vocab: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            c: Matrix::uniform(vocab, dim, scale, rng),
            h_r: Matrix::uniform(dim, dim, scale, rng),
            o_r: Matrix::uniform(vocab, dim, scale, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.c.rows()
    }

    pub fn dim(&self) -> usize {
        self.c.cols()
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn hidden(&self, w: WordId, h_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut x = self.c.row(w as usize).to_vec();
        axpy(1.0, h_prev, &mut x);
        let mut h = vec![0.0; self.dim()];
        self.h_r.add_mul_vec(&x, &mut h);
        h.iter_mut().for_each(|v| *v = sigmoid(*v));
        (x, h)
    }

    pub fn output(&self, h: &[f64]) -> Distribution {
        let mut y = vec![0.0; self.vocab_size()];
        self.o_r.add_mul_vec(h, &mut y);
        Distribution::from_logits(&y).expect("vocabulary has no recommendable words")
    }

    /// Reads `w` and returns the new state with the next-word distribution.
    pub fn step(&self, w: WordId, h_prev: &[f64]) -> (Vec<f64>, Distribution) {
        let (_, h) = self.hidden(w, h_prev);
        let dist = self.output(&h);
        (h, dist)
    }

    /// State after reading `context` from a zero start.
    pub fn state_after(&self, context: &[WordId]) -> Vec<f64> {
        context
            .iter()
            .fold(self.initial_state(), |h, &w| self.hidden(w, &h).1)
    }

    pub fn distribution(&self, context: &[WordId]) -> Distribution {
        self.output(&self.state_after(context))
    }

    /// Forward and backward over one chunk starting from `h0`. `inputs[t]`
    /// is read at step t and `targets[t]` (if any) is predicted from the
    /// resulting state. Gradients scaled by `scale` are added into `grads`;
    /// nothing flows back into `h0`. Returns the summed NLL and final state.
    pub(crate) fn chunk(
        &self,
        h0: &[f64],
        inputs: &[WordId],
        targets: &[Option<WordId>],
        scale: f64,
        grads: &mut RnnParams,
    ) -> (f64, Vec<f64>) {
        debug_assert_eq!(inputs.len(), targets.len());
        let d = self.dim();
        let mut steps = Vec::with_capacity(inputs.len());
        let mut h = h0.to_vec();
        for &w in inputs {
            let (x, h_new) = self.hidden(w, &h);
            steps.push(Step { input: w, x, h: h_new.clone() });
            h = h_new;
        }
        let last = h;

        let mut loss = 0.0;
        let mut dh_next = vec![0.0; d];
        for (step, target) in steps.iter().zip(targets).rev() {
            let mut dh = std::mem::take(&mut dh_next);
            if let Some(t) = *target {
                let probs = self.output(&step.h);
                loss -= probs.prob(t).ln();
                let mut dy: Vec<f64> = probs.probs().iter().map(|p| p * scale).collect();
                dy[t as usize] -= scale;
                grads.o_r.add_outer(&dy, &step.h);
                self.o_r.add_tmul_vec(&dy, &mut dh);
            }
            let dz: Vec<f64> = dh
                .iter()
                .zip(&step.h)
                .map(|(g, h)| g * h * (1.0 - h))
                .collect();
            grads.h_r.add_outer(&dz, &step.x);
            let mut dx = vec![0.0; d];
            self.h_r.add_tmul_vec(&dz, &mut dx);
            axpy(1.0, &dx, grads.c.row_mut(step.input as usize));
            dh_next = dx;
        }
        (loss, last)
    }

    /// Mean NLL over every predicted position of every sequence, plus
    /// ½·λ·‖θ‖², with full backpropagation through time.
    pub fn loss_and_grad(&self, sequences: &[Vec<WordId>], decay: f64) -> (f64, RnnParams) {
        let mut grads = self.zeroed();
        let count: usize = sequences.iter().map(|s| prediction_targets(s).1.iter().flatten().count()).sum();
        assert!(count > 0, "no predictable positions");
        let scale = 1.0 / count as f64;
        let mut loss = 0.0;
        for seq in sequences {
            let (inputs, targets) = prediction_targets(seq);
            loss += self.chunk(&self.initial_state(), inputs, &targets, scale, &mut grads).0;
        }
        self.add_decay_grad(&mut grads, decay);
        (loss * scale + self.decay_penalty(decay), grads)
    }
}

/// Inputs w_0..w_{T−2} and their targets w_1..w_{T−1}; reserved targets
/// are not predicted.
pub(crate) fn prediction_targets(seq: &[WordId]) -> (&[WordId], Vec<Option<WordId>>) {
    if seq.len() < 2 {
        return (&[], Vec::new());
    }
    let targets = seq[1..]
        .iter()
        .map(|&w| (!is_reserved(w)).then_some(w))
        .collect();
    (&seq[..seq.len() - 1], targets)
}

impl Parameters for RnnParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("C", &self.c), ("H_R", &self.h_r), ("O_R", &self.o_r)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.c, &mut self.h_r, &mut self.o_r]
    }
}
