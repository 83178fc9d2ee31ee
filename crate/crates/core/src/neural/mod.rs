//! Neural language models: feedforward (NLM), left-context CBOW, recurrent
//! and LSTM networks, with analytic gradients and seeded SGD training.

mod cbow;
mod io;
mod lstm;
mod nlm;
mod rnn;
mod tensor;
mod train;

pub use cbow::{context_weights, CbowParams, ContextWeighting, NoiseDistribution};
pub use lstm::{cell_update, LstmParams, LstmState, FORGET_BIAS_INIT};
pub use nlm::{NlmCache, NlmParams};
pub use rnn::RnnParams;
pub use tensor::{dot, log_sigmoid, sigmoid, Matrix, Parameters};
pub use train::{train, Architecture, Network, TrainConfig, TrainReport};

use crate::error::Result;
use crate::lm::{Distribution, LanguageModel, Prediction, WordId, UNK};

/// A trained network with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub network: Network,
    pub architecture: Architecture,
    pub config: TrainConfig,
    /// Whether UNK occurred in the training data. When it did not, a
    /// context made only of UNK yields no recommendation.
    pub unk_trained: bool,
}

impl NeuralModel {
    pub fn train(
        architecture: Architecture,
        sequences: &[Vec<WordId>],
        vocab: usize,
        config: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        let (network, report) = train::train(architecture, sequences, vocab, config)?;
        let model = Self {
            network,
            architecture,
            config: config.clone(),
            unk_trained: train::unk_seen(sequences),
        };
        Ok((model, report))
    }

    pub fn kind(&self) -> &'static str {
        match self.architecture {
            Architecture::Nlm { .. } => "nlm",
            Architecture::Cbow {
                weighting: ContextWeighting::Mean,
                ..
            } => "cbow",
            Architecture::Cbow { .. } => "cbow-weighted",
            Architecture::Rnn { .. } => "rnn",
            Architecture::Lstm { .. } => "lstm",
        }
    }

    pub fn distribution(&self, context: &[WordId]) -> Distribution {
        match &self.network {
            Network::Nlm(p) => p.forward(&p.window_of(context)).probs,
            Network::Cbow(p) => p.distribution(context),
            Network::Rnn(p) => p.distribution(context),
            Network::Lstm(p) => p.distribution(context),
        }
    }
}

impl LanguageModel for NeuralModel {
    fn vocab_size(&self) -> usize {
        match &self.network {
            Network::Nlm(p) => p.vocab_size(),
            Network::Cbow(p) => p.vocab_size(),
            Network::Rnn(p) => p.vocab_size(),
            Network::Lstm(p) => p.vocab_size(),
        }
    }

    fn predict(&self, context: &[WordId]) -> Prediction {
        if context.is_empty() || (!self.unk_trained && context.iter().all(|&w| w == UNK)) {
            return Prediction::NoRecommendation;
        }
        Prediction::Distribution(self.distribution(context))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untrained_unk_contexts_get_no_recommendation() {
        let seqs = vec![vec![2, 3, 4], vec![3, 2]];
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let (m, _) = NeuralModel::train(Architecture::Rnn { dim: 2 }, &seqs, 5, &cfg).unwrap();
        assert!(!m.unk_trained);
        assert!(!m.predict(&[UNK, UNK]).is_recommendation());
        assert!(m.predict(&[UNK, 2]).is_recommendation());

        let seqs = vec![vec![2, UNK, 4], vec![3, 2]];
        let (m, _) = NeuralModel::train(Architecture::Rnn { dim: 2 }, &seqs, 5, &cfg).unwrap();
        assert!(m.predict(&[UNK]).is_recommendation());
    }

    #[test]
    fn kinds() {
        let cbow = |weighting| Architecture::Cbow {
            dim: 2,
            window: 2,
            negatives: 1,
            weighting,
        };
        let cfg = TrainConfig::default();
        let seqs = vec![vec![2, 3]];
        let kind = |a| NeuralModel::train(a, &seqs, 4, &cfg).unwrap().0.kind();
        assert_eq!(kind(cbow(ContextWeighting::Mean)), "cbow");
        assert_eq!(kind(cbow(ContextWeighting::Position)), "cbow-weighted");
        assert_eq!(kind(Architecture::Lstm { dim: 2, hidden: 2 }), "lstm");
    }
}
