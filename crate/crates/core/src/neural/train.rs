//! Seeded per-example SGD for the four architectures.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cbow::{CbowParams, ContextWeighting, NoiseDistribution};
use super::lstm::LstmParams;
use super::nlm::NlmParams;
use super::rnn::{prediction_targets, RnnParams};
use super::tensor::Parameters;
use crate::error::{Error, Result};
use crate::lm::{is_reserved, WordId, FIRST_WORD, UNK};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Weights start uniform in [−init_scale, init_scale].
    pub init_scale: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip for the recurrent models; 0 disables.
    pub clip_norm: f64,
    /// Truncation length for backpropagation through time.
    pub bptt: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 5,
            seed: 1,
            init_scale: 0.05,
            weight_decay: 1e-5,
            clip_norm: 5.0,
            bptt: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.init_scale >= 0.0 && self.weight_decay >= 0.0 && self.clip_norm >= 0.0) {
            return bad("init scale, weight decay and clip must be non-negative");
        }
        if self.bptt == 0 {
            return bad("bptt length must be at least 1");
        }
        Ok(())
    }

    /// Learning rate for `epoch` (0-based), decayed linearly.
    pub fn rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * (1.0 - epoch as f64 / self.epochs as f64)
    }

    fn init_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// The shuffle and sampling stream of one epoch, independent of every
    /// other epoch.
    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64 + 1);
        rng
    }
}

/// Shape hyperparameters of each network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Nlm {
        dim: usize,
        window: usize,
        hidden: usize,
    },
    Cbow {
        dim: usize,
        window: usize,
        negatives: usize,
        weighting: ContextWeighting,
    },
    Rnn {
        dim: usize,
    },
    Lstm {
        dim: usize,
        hidden: usize,
    },
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Architecture::Nlm { dim, window, hidden } => dim > 0 && window > 0 && hidden > 0,
            Architecture::Cbow {
                dim,
                window,
                negatives,
                ..
            } => dim > 0 && window > 0 && negatives > 0,
            Architecture::Rnn { dim } => dim > 0,
            Architecture::Lstm { dim, hidden } => dim > 0 && hidden > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("network sizes must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Nlm(NlmParams),
    Cbow(CbowParams),
    Rnn(RnnParams),
    Lstm(LstmParams),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

pub(crate) fn initial_network(arch: Architecture, vocab: usize, cfg: &TrainConfig) -> Network {
    let mut rng = cfg.init_rng();
    let s = cfg.init_scale;
    match arch {
        Architecture::Nlm { dim, window, hidden } => {
            Network::Nlm(NlmParams::init(vocab, dim, window, hidden, s, &mut rng))
        }
        Architecture::Cbow {
            dim,
            window,
            negatives,
            weighting,
        } => Network::Cbow(CbowParams::init(
            vocab, dim, window, negatives, weighting, s, &mut rng,
        )),
        Architecture::Rnn { dim } => Network::Rnn(RnnParams::init(vocab, dim, s, &mut rng)),
        Architecture::Lstm { dim, hidden } => {
            Network::Lstm(LstmParams::init(vocab, dim, hidden, s, &mut rng))
        }
    }
}

/// (history end, target) for every position t ≥ 1 with a recommendable
/// target.
fn positions(sequences: &[Vec<WordId>]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for (s, seq) in sequences.iter().enumerate() {
        for t in 1..seq.len() {
            if !is_reserved(seq[t]) {
                out.push((s as u32, t as u32));
            }
        }
    }
    out
}

fn check(epoch: usize, loss: f64, finite: bool) -> Result<()> {
    if loss.is_finite() && finite {
        Ok(())
    } else {
        Err(Error::DivergenceDetected { epoch, loss })
    }
}

/// Trains a network on id-mapped sequences. Every word id must be below
/// `vocab`.
pub fn train(
    arch: Architecture,
    sequences: &[Vec<WordId>],
    vocab: usize,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    arch.validate()?;
    if vocab <= FIRST_WORD as usize {
        return Err(Error::InvalidConfig("vocabulary has no recommendable words".into()));
    }
    if let Some(&w) = sequences.iter().flatten().find(|&&w| w as usize >= vocab) {
        return Err(Error::VocabularyMismatch { id: w, size: vocab });
    }
    let mut net = initial_network(arch, vocab, cfg);
    let report = match &mut net {
        Network::Nlm(p) => train_nlm(p, sequences, cfg)?,
        Network::Cbow(p) => train_cbow(p, sequences, cfg)?,
        Network::Rnn(p) => train_recurrent(p, sequences, cfg)?,
        Network::Lstm(p) => train_recurrent(p, sequences, cfg)?,
    };
    Ok((net, report))
}

fn train_nlm(p: &mut NlmParams, sequences: &[Vec<WordId>], cfg: &TrainConfig) -> Result<TrainReport> {
    let mut examples = positions(sequences);
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut report = TrainReport::default();
    let mut grads = p.zeroed();
    for epoch in 0..cfg.epochs {
        let mut rng = cfg.epoch_rng(epoch);
        examples.shuffle(&mut rng);
        let lr = cfg.rate_at(epoch);
        let mut total = 0.0;
        for &(s, t) in &examples {
            let seq = &sequences[s as usize];
            let window = p.window_of(&seq[..t as usize]);
            let target = seq[t as usize];
            grads.tensors_mut().into_iter().for_each(|g| g.fill(0.0));
            let cache = p.forward(&window);
            total -= cache.probs.prob(target).ln();
            p.backward(&window, &cache, target, 1.0, &mut grads);
            p.add_decay_grad(&mut grads, cfg.weight_decay);
            p.sgd_step(&grads, lr);
        }
        let mean = total / examples.len() as f64;
        check(epoch, mean, p.all_finite())?;
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

fn train_cbow(p: &mut CbowParams, sequences: &[Vec<WordId>], cfg: &TrainConfig) -> Result<TrainReport> {
    let mut examples = positions(sequences);
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut freq = vec![0u64; p.vocab_size()];
    for &w in sequences.iter().flatten() {
        freq[w as usize] += 1;
    }
    let noise = NoiseDistribution::from_frequencies(&freq)?;
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mut rng = cfg.epoch_rng(epoch);
        examples.shuffle(&mut rng);
        let lr = cfg.rate_at(epoch);
        let mut total = 0.0;
        for &(s, t) in &examples {
            let seq = &sequences[s as usize];
            let context = p.window_of(&seq[..t as usize]);
            let target = seq[t as usize];
            let negatives = noise.sample_negatives(p.negatives, target, &mut rng);
            total += p.sgd_example(context, target, &negatives, lr);
        }
        let mean = total / examples.len() as f64;
        check(epoch, mean, p.all_finite())?;
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Shared by the two recurrent networks.
pub(crate) trait Recurrent: Parameters {
    type State: Clone;
    fn start(&self) -> Self::State;
    fn run_chunk(
        &self,
        state: &Self::State,
        inputs: &[WordId],
        targets: &[Option<WordId>],
        scale: f64,
        grads: &mut Self,
    ) -> (f64, Self::State);
}

impl Recurrent for RnnParams {
    type State = Vec<f64>;
    fn start(&self) -> Vec<f64> {
        self.initial_state()
    }
    fn run_chunk(
        &self,
        state: &Vec<f64>,
        inputs: &[WordId],
        targets: &[Option<WordId>],
        scale: f64,
        grads: &mut Self,
    ) -> (f64, Vec<f64>) {
        self.chunk(state, inputs, targets, scale, grads)
    }
}

impl Recurrent for LstmParams {
    type State = super::lstm::LstmState;
    fn start(&self) -> Self::State {
        self.initial_state()
    }
    fn run_chunk(
        &self,
        state: &Self::State,
        inputs: &[WordId],
        targets: &[Option<WordId>],
        scale: f64,
        grads: &mut Self,
    ) -> (f64, Self::State) {
        self.chunk(state, inputs, targets, scale, grads)
    }
}

/// Each sequence is processed in chunks of `bptt` steps; the state carries
/// across chunks but gradients do not. One SGD step per chunk on the mean
/// loss of its predicted positions.
fn train_recurrent<P: Recurrent>(
    p: &mut P,
    sequences: &[Vec<WordId>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut order: Vec<usize> = (0..sequences.len())
        .filter(|&s| prediction_targets(&sequences[s]).1.iter().any(Option::is_some))
        .collect();
    let total_positions: usize = order
        .iter()
        .map(|&s| prediction_targets(&sequences[s]).1.iter().flatten().count())
        .sum();
    if total_positions == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut report = TrainReport::default();
    let mut grads = p.zeroed();
    for epoch in 0..cfg.epochs {
        let mut rng = cfg.epoch_rng(epoch);
        order.shuffle(&mut rng);
        let lr = cfg.rate_at(epoch);
        let mut total = 0.0;
        for &s in &order {
            let (inputs, targets) = prediction_targets(&sequences[s]);
            let mut state = p.start();
            for (ins, tgs) in inputs.chunks(cfg.bptt).zip(targets.chunks(cfg.bptt)) {
                let n = tgs.iter().flatten().count();
                grads.tensors_mut().into_iter().for_each(|g| g.fill(0.0));
                let scale = if n == 0 { 0.0 } else { 1.0 / n as f64 };
                let (loss, next) = p.run_chunk(&state, ins, tgs, scale, &mut grads);
                state = next;
                if n == 0 {
                    continue;
                }
                total += loss;
                p.add_decay_grad(&mut grads, cfg.weight_decay);
                if cfg.clip_norm > 0.0 {
                    grads.clip_norm(cfg.clip_norm);
                }
                p.sgd_step(&grads, lr);
            }
        }
        let mean = total / total_positions as f64;
        check(epoch, mean, p.all_finite())?;
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Whether UNK occurs anywhere in the training input.
pub(crate) fn unk_seen(sequences: &[Vec<WordId>]) -> bool {
    sequences.iter().flatten().any(|&w| w == UNK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<WordId>> {
        vec![vec![2, 3, 4, 2, 3], vec![3, 4, 2], vec![4, 2, 3, 4]]
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        c = TrainConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn learning_rate_decays_linearly() {
        let c = TrainConfig {
            learning_rate: 0.1,
            epochs: 4,
            ..TrainConfig::default()
        };
        assert_eq!(c.rate_at(0), 0.1);
        assert!((c.rate_at(2) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn epoch_streams_differ() {
        use rand::RngCore;
        let c = TrainConfig::default();
        assert_ne!(c.epoch_rng(0).next_u64(), c.epoch_rng(1).next_u64());
        assert_eq!(c.epoch_rng(3).next_u64(), c.epoch_rng(3).next_u64());
    }

    #[test]
    fn every_architecture_trains_deterministically() {
        let cfg = TrainConfig {
            epochs: 2,
            bptt: 2,
            ..TrainConfig::default()
        };
        for arch in [
            Architecture::Nlm { dim: 3, window: 2, hidden: 4 },
            Architecture::Cbow {
                dim: 3,
                window: 2,
                negatives: 2,
                weighting: ContextWeighting::Position,
            },
            Architecture::Rnn { dim: 3 },
            Architecture::Lstm { dim: 3, hidden: 4 },
        ] {
            let (a, ra) = train(arch, &corpus(), 5, &cfg).unwrap();
            let (b, rb) = train(arch, &corpus(), 5, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(ra, rb);
            assert_eq!(ra.epoch_losses.len(), 2);
        }
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let cfg = TrainConfig {
            learning_rate: 1e200,
            init_scale: 1.0,
            clip_norm: 0.0,
            ..TrainConfig::default()
        };
        let err = train(Architecture::Nlm { dim: 3, window: 2, hidden: 4 }, &corpus(), 5, &cfg);
        assert!(matches!(err, Err(Error::DivergenceDetected { .. })));
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let err = train(Architecture::Rnn { dim: 2 }, &[vec![2, 9]], 5, &TrainConfig::default());
        assert!(matches!(err, Err(Error::VocabularyMismatch { id: 9, .. })));
    }
}
