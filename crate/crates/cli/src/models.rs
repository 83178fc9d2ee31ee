//! Loading persisted models and assembling mixtures from them.

use std::collections::BTreeMap;
use std::sync::Arc;

use anyhow::{Context, Result};
use nextword::corpus::Vocabulary;
use nextword::hybrid::{Mixture, MixtureWeights};
use nextword::neural::NeuralModel;
use nextword::ngram::NGramModel;
use nextword::{LanguageModel, Prediction, WordId};

use crate::config::{Combination, ExperimentConfig, ModelKind, Target};
use crate::workdir::{read_text, Workdir};

#[derive(Debug)]
pub enum LoadedModel {
    Ngram(NGramModel),
    Neural(NeuralModel),
}

impl LanguageModel for LoadedModel {
    fn vocab_size(&self) -> usize {
        match self {
            LoadedModel::Ngram(m) => m.vocab_size(),
            LoadedModel::Neural(m) => m.vocab_size(),
        }
    }

    fn predict(&self, context: &[WordId]) -> Prediction {
        match self {
            LoadedModel::Ngram(m) => m.predict(context),
            LoadedModel::Neural(m) => m.predict(context),
        }
    }
}

pub fn load_model(wd: &Workdir, kind: ModelKind, vocab: &Vocabulary) -> Result<LoadedModel> {
    let path = wd.model(kind.name());
    if !path.exists() {
        anyhow::bail!(
            "model file {} is missing; run `nextword train {kind}` first",
            path.display()
        );
    }
    let model = if kind.is_ngram() {
        LoadedModel::Ngram(NGramModel::from_text(&read_text(&path)?, vocab)?)
    } else {
        LoadedModel::Neural(NeuralModel::load(&path)?)
    };
    let loaded = match &model {
        LoadedModel::Ngram(m) => m.kind(),
        LoadedModel::Neural(m) => m.kind(),
    };
    anyhow::ensure!(
        loaded == kind.name(),
        "{} holds a {loaded} model, not {kind}",
        path.display()
    );
    anyhow::ensure!(
        model.vocab_size() == vocab.len(),
        "{} was trained on a different vocabulary",
        path.display()
    );
    Ok(model)
}

/// Loads each model once; mixtures share their components.
pub struct ModelCache<'a> {
    wd: &'a Workdir,
    vocab: &'a Vocabulary,
    loaded: BTreeMap<ModelKind, Arc<LoadedModel>>,
}

impl<'a> ModelCache<'a> {
    pub fn new(wd: &'a Workdir, vocab: &'a Vocabulary) -> Self {
        Self {
            wd,
            vocab,
            loaded: BTreeMap::new(),
        }
    }

    pub fn get(&mut self, kind: ModelKind) -> Result<Arc<LoadedModel>> {
        if let Some(m) = self.loaded.get(&kind) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(
            load_model(self.wd, kind, self.vocab).with_context(|| format!("loading {kind}"))?,
        );
        self.loaded.insert(kind, Arc::clone(&m));
        Ok(m)
    }
}

/// Where a mixture's weights came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    Tuned,
    Default,
}

/// Tuned weights when `tune` has run for the combination, else the
/// configured defaults.
pub fn mixture_weights(
    cfg: &ExperimentConfig,
    wd: &Workdir,
    c: &Combination,
) -> Result<(MixtureWeights, WeightSource)> {
    let path = wd.weights(&c.name());
    if path.exists() {
        let w = MixtureWeights::from_tsv(&read_text(&path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            w.components() == c.components().len(),
            "{} does not match {}",
            path.display(),
            c.name()
        );
        Ok((w, WeightSource::Tuned))
    } else {
        Ok((cfg.default_weights(c)?, WeightSource::Default))
    }
}

pub fn build_target(
    cfg: &ExperimentConfig,
    wd: &Workdir,
    cache: &mut ModelCache<'_>,
    target: &Target,
) -> Result<(Box<dyn LanguageModel>, Option<(MixtureWeights, WeightSource)>)> {
    match target {
        Target::Model(k) => Ok((Box::new(cache.get(*k)?), None)),
        Target::Mixture(c) => {
            let parts = c
                .components()
                .into_iter()
                .map(|k| cache.get(k))
                .collect::<Result<Vec<_>>>()?;
            let (w, source) = mixture_weights(cfg, wd, c)?;
            Ok((Box::new(Mixture::new(parts, w)?), Some((w, source))))
        }
    }
}
