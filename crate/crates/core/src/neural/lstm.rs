//! LSTM language model. Per step, with e = C(w):
//!
//! i = σ(W_xi·e + W_hi·h + b_i), f = σ(W_xf·e + W_hf·h + b_f),
//! o = σ(W_xo·e + W_ho·h + b_o), g = tanh(W_xc·e + W_hc·h + b_c),
//! c' = f⊙c + i⊙g, h' = o⊙tanh(c'), y = W_y·h' + b_y.

use rand::Rng;

use super::tensor::{axpy, sigmoid, Matrix, Parameters};
use crate::lm::{Distribution, WordId};

pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub c: Matrix,
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub b_i: Matrix,
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub b_f: Matrix,
    pub w_xc: Matrix,
    pub w_hc: Matrix,
    pub b_c: Matrix,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub b_o: Matrix,
    /// Output projection, |V| × hidden.
    pub w_y: Matrix,
    pub b_y: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

struct Step {
    input: WordId,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// c' = f⊙c + i⊙g
pub fn cell_update(f: &[f64], i: &[f64], g: &[f64], c_prev: &[f64]) -> Vec<f64> {
    (0..c_prev.len())
        .map(|k| f[k] * c_prev[k] + i[k] * g[k])
        .collect()
}

impl LstmParams {
    pub fn zeros(vocab: usize, dim: usize, hidden: usize) -> Self {
        let gate_x = || Matrix::zeros(hidden, dim);
        let gate_h = || Matrix::zeros(hidden, hidden);
        let bias = || Matrix::zeros(1, hidden);
        Self {
            c: Matrix::zeros(vocab, dim),
            w_xi: gate_x(),
            w_hi: gate_h(),
            b_i: bias(),
            w_xf: gate_x(),
            w_hf: gate_h(),
            b_f: bias(),
            w_xc: gate_x(),
            w_hc: gate_h(),
            b_c: bias(),
            w_xo: gate_x(),
            w_ho: gate_h(),
            b_o: bias(),
            w_y: Matrix::zeros(vocab, hidden),
            b_y: Matrix::zeros(1, vocab),
        }
    }

    /// Weights uniform in [−scale, scale]; biases zero except the forget
    /// gate, which starts at [`FORGET_BIAS_INIT`].
    pub fn init<R: Rng + ?Sized>(
        vocab: usize,
        dim: usize,
        hidden: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(vocab, dim, hidden);
        for (name, t) in p.named_mut() {
            if !name.starts_with('b') {
                *t = Matrix::uniform(t.rows(), t.cols(), scale, rng);
            }
        }
        p.b_f.fill(FORGET_BIAS_INIT);
        p
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("C", &mut self.c),
            ("W_xi", &mut self.w_xi),
            ("W_hi", &mut self.w_hi),
            ("b_i", &mut self.b_i),
            ("W_xf", &mut self.w_xf),
            ("W_hf", &mut self.w_hf),
            ("b_f", &mut self.b_f),
            ("W_xc", &mut self.w_xc),
            ("W_hc", &mut self.w_hc),
            ("b_c", &mut self.b_c),
            ("W_xo", &mut self.w_xo),
            ("W_ho", &mut self.w_ho),
            ("b_o", &mut self.b_o),
            ("W_y", &mut self.w_y),
            ("b_y", &mut self.b_y),
        ]
    }

    pub fn vocab_size(&self) -> usize {
        self.c.rows()
    }

    pub fn dim(&self) -> usize {
        self.c.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_hi.rows()
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState {
            h: vec![0.0; self.hidden()],
            c: vec![0.0; self.hidden()],
        }
    }

    fn gate(&self, wx: &Matrix, wh: &Matrix, b: &Matrix, e: &[f64], h: &[f64]) -> Vec<f64> {
        let mut z = b.row(0).to_vec();
        wx.add_mul_vec(e, &mut z);
        wh.add_mul_vec(h, &mut z);
        z
    }

    fn forward_step(&self, w: WordId, state: &LstmState) -> Step {
        let e = self.c.row(w as usize);
        let h = &state.h;
        let sig = |z: Vec<f64>| z.into_iter().map(sigmoid).collect::<Vec<_>>();
        let i = sig(self.gate(&self.w_xi, &self.w_hi, &self.b_i, e, h));
        let f = sig(self.gate(&self.w_xf, &self.w_hf, &self.b_f, e, h));
        let o = sig(self.gate(&self.w_xo, &self.w_ho, &self.b_o, e, h));
        let g: Vec<f64> = self
            .gate(&self.w_xc, &self.w_hc, &self.b_c, e, h)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let c = cell_update(&f, &i, &g, &state.c);
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h_new = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
        Step {
            input: w,
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
            h: h_new,
        }
    }

    pub fn output(&self, h: &[f64]) -> Distribution {
        let mut y = self.b_y.row(0).to_vec();
        self.w_y.add_mul_vec(h, &mut y);
        Distribution::from_logits(&y).expect("vocabulary has no recommendable words")
    }

    fn next_state(&self, w: WordId, state: &LstmState) -> LstmState {
        let s = self.forward_step(w, state);
        let c = cell_update(&s.f, &s.i, &s.g, &s.c_prev);
        LstmState { h: s.h, c }
    }

    /// Reads `w` and returns the new state with the next-word distribution.
    pub fn step(&self, w: WordId, state: &LstmState) -> (LstmState, Distribution) {
        let next = self.next_state(w, state);
        let dist = self.output(&next.h);
        (next, dist)
    }

    pub fn state_after(&self, context: &[WordId]) -> LstmState {
        context
            .iter()
            .fold(self.initial_state(), |s, &w| self.next_state(w, &s))
    }

    pub fn distribution(&self, context: &[WordId]) -> Distribution {
        self.output(&self.state_after(context).h)
    }

    /// Forward and backward over one chunk; see the recurrent model's
    /// counterpart for the contract.
    pub(crate) fn chunk(
        &self,
        start: &LstmState,
        inputs: &[WordId],
        targets: &[Option<WordId>],
        scale: f64,
        grads: &mut LstmParams,
    ) -> (f64, LstmState) {
        debug_assert_eq!(inputs.len(), targets.len());
        let hd = self.hidden();
        let mut steps: Vec<Step> = Vec::with_capacity(inputs.len());
        let mut state = start.clone();
        for &w in inputs {
            let s = self.forward_step(w, &state);
            state = LstmState {
                h: s.h.clone(),
                c: cell_update(&s.f, &s.i, &s.g, &s.c_prev),
            };
            steps.push(s);
        }

        let mut loss = 0.0;
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        for (s, target) in steps.iter().zip(targets).rev() {
            let mut dh = std::mem::take(&mut dh_next);
            if let Some(t) = *target {
                let probs = self.output(&s.h);
                loss -= probs.prob(t).ln();
                let mut dy: Vec<f64> = probs.probs().iter().map(|p| p * scale).collect();
                dy[t as usize] -= scale;
                axpy(1.0, &dy, grads.b_y.row_mut(0));
                grads.w_y.add_outer(&dy, &s.h);
                self.w_y.add_tmul_vec(&dy, &mut dh);
            }
            let mut dzi = vec![0.0; hd];
            let mut dzf = vec![0.0; hd];
            let mut dzg = vec![0.0; hd];
            let mut dzo = vec![0.0; hd];
            let mut dc_prev = vec![0.0; hd];
            for k in 0..hd {
                let dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                dzo[k] = dh[k] * s.tanh_c[k] * s.o[k] * (1.0 - s.o[k]);
                dzf[k] = dc * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
                dzi[k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
                dzg[k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
                dc_prev[k] = dc * s.f[k];
            }
            let e = self.c.row(s.input as usize);
            let mut de = vec![0.0; self.dim()];
            let mut dh_prev = vec![0.0; hd];
            let gates = [
                (&dzi, &self.w_xi, &self.w_hi, &mut grads.w_xi, &mut grads.w_hi, &mut grads.b_i),
                (&dzf, &self.w_xf, &self.w_hf, &mut grads.w_xf, &mut grads.w_hf, &mut grads.b_f),
                (&dzg, &self.w_xc, &self.w_hc, &mut grads.w_xc, &mut grads.w_hc, &mut grads.b_c),
                (&dzo, &self.w_xo, &self.w_ho, &mut grads.w_xo, &mut grads.w_ho, &mut grads.b_o),
            ];
            for (dz, wx, wh, gwx, gwh, gb) in gates {
                gwx.add_outer(dz, e);
                gwh.add_outer(dz, &s.h_prev);
                axpy(1.0, dz, gb.row_mut(0));
                wx.add_tmul_vec(dz, &mut de);
                wh.add_tmul_vec(dz, &mut dh_prev);
            }
            axpy(1.0, &de, grads.c.row_mut(s.input as usize));
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        (loss, state)
    }

    /// Mean NLL over every predicted position plus ½·λ·‖W‖² (biases
    /// excluded), with full backpropagation through time.
    pub fn loss_and_grad(&self, sequences: &[Vec<WordId>], decay: f64) -> (f64, LstmParams) {
        use super::rnn::prediction_targets;
        let mut grads = self.zeroed();
        let count: usize = sequences
            .iter()
            .map(|s| prediction_targets(s).1.iter().flatten().count())
            .sum();
        assert!(count > 0, "no predictable positions");
        let scale = 1.0 / count as f64;
        let mut loss = 0.0;
        for seq in sequences {
            let (inputs, targets) = prediction_targets(seq);
            loss += self
                .chunk(&self.initial_state(), inputs, &targets, scale, &mut grads)
                .0;
        }
        self.add_decay_grad(&mut grads, decay);
        (loss * scale + self.decay_penalty(decay), grads)
    }
}

impl Parameters for LstmParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("C", &self.c),
            ("W_xi", &self.w_xi),
            ("W_hi", &self.w_hi),
            ("b_i", &self.b_i),
            ("W_xf", &self.w_xf),
            ("W_hf", &self.w_hf),
            ("b_f", &self.b_f),
            ("W_xc", &self.w_xc),
            ("W_hc", &self.w_hc),
            ("b_c", &self.b_c),
            ("W_xo", &self.w_xo),
            ("W_ho", &self.w_ho),
            ("b_o", &self.b_o),
            ("W_y", &self.w_y),
            ("b_y", &self.b_y),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.named_mut().into_iter().map(|(_, t)| t).collect()
    }
}
