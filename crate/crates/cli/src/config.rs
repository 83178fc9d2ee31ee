//! Experiment configuration: `key = value` text files layered over a named
//! profile, then environment and command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use nextword::eval::{Objective, OverlapMode};
use nextword::hybrid::MixtureWeights;
use nextword::neural::{Architecture, ContextWeighting, TrainConfig};
use nextword::ngram::MleOptions;

use crate::error::UsageError;

pub const WORKDIR_ENV: &str = "NEXTWORD_WORKDIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }

    fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Profile::Desk => &[
                ("nlm.dim", "16"),
                ("nlm.window", "3"),
                ("nlm.hidden", "32"),
                ("cbow.dim", "32"),
                ("cbow.window", "5"),
                ("cbow.negatives", "3"),
                ("rnn.dim", "32"),
                ("lstm.dim", "24"),
                ("lstm.hidden", "32"),
                ("train.epochs", "5"),
            ],
            Profile::Paper => &[
                ("nlm.dim", "100"),
                ("nlm.window", "6"),
                ("nlm.hidden", "200"),
                ("cbow.dim", "200"),
                ("cbow.window", "5"),
                ("cbow.negatives", "3"),
                ("rnn.dim", "200"),
                ("lstm.dim", "300"),
                ("lstm.hidden", "300"),
                ("train.epochs", "10"),
            ],
        }
    }
}

/// Keys shared by both profiles.
const COMMON: &[(&str, &str)] = &[
    ("corpus", ""),
    ("workdir", "work"),
    ("seed", "1"),
    ("min_count", "1"),
    ("ngram.order", "3"),
    ("ngram.backoff", "true"),
    ("ngram.unigram_fallback", "false"),
    ("cbow_weighted.weighting", "position"),
    ("train.learning_rate", "0.05"),
    ("train.init_scale", "0.05"),
    ("train.weight_decay", "1e-5"),
    ("train.clip_norm", "5"),
    ("train.bptt", "20"),
    ("mixture.nlm", "0.5"),
    ("mixture.cbow", "0.8"),
    ("mixture.cbow-weighted", "0.8"),
    ("mixture.rnn", "0.9"),
    ("mixture.lstm", "0.9"),
    ("mixture.lambda1", "0.3"),
    ("mixture.lambda2", "0.2"),
    ("tune.objective", "map"),
    ("tune.step", "0.1"),
    (
        "tune.combinations",
        "nlm+ngram,cbow+ngram,rnn+ngram,lstm+ngram,nlm+cbow+ngram",
    ),
    (
        "eval.models",
        "ngram,ngram-kn,nlm,cbow,cbow-weighted,rnn,lstm,nlm+ngram,cbow+ngram,rnn+ngram,lstm+ngram,nlm+cbow+ngram",
    ),
    ("eval.overlap", "jaccard"),
    ("eval.k", "10"),
    ("recommend.k", "5"),
    ("synth.sequences", "5000"),
    ("synth.vocab", "300"),
    ("synth.held_out", "30"),
    ("synth.injection", "0.2"),
];

/// Every model the `train` command can build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
pub enum ModelKind {
    Ngram,
    NgramKn,
    Nlm,
    Cbow,
    CbowWeighted,
    Rnn,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Ngram,
        ModelKind::NgramKn,
        ModelKind::Nlm,
        ModelKind::Cbow,
        ModelKind::CbowWeighted,
        ModelKind::Rnn,
        ModelKind::Lstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ngram => "ngram",
            ModelKind::NgramKn => "ngram-kn",
            ModelKind::Nlm => "nlm",
            ModelKind::Cbow => "cbow",
            ModelKind::CbowWeighted => "cbow-weighted",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn is_ngram(self) -> bool {
        matches!(self, ModelKind::Ngram | ModelKind::NgramKn)
    }

    pub fn is_cbow(self) -> bool {
        matches!(self, ModelKind::Cbow | ModelKind::CbowWeighted)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                UsageError(format!(
                    "unknown model kind {s:?}; valid kinds: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// A single model or a `+`-joined mixture such as `nlm+cbow+ngram`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Model(ModelKind),
    Mixture(Combination),
}

impl Target {
    pub fn parse(s: &str) -> Result<Self, UsageError> {
        if s.contains('+') {
            Combination::parse(s).map(Target::Mixture)
        } else {
            s.parse().map(Target::Model)
        }
    }

    pub fn name(&self) -> String {
        match self {
            Target::Model(k) => k.name().to_string(),
            Target::Mixture(c) => c.name(),
        }
    }

    pub fn kinds(&self) -> Vec<ModelKind> {
        match self {
            Target::Model(k) => vec![*k],
            Target::Mixture(c) => c.components(),
        }
    }
}

/// Mixture roles: one n-gram model (weight λ or λ1), an optional CBOW model
/// (λ2) and one further neural model (the remainder).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Combination {
    pub ngram: ModelKind,
    pub word2vec: Option<ModelKind>,
    pub neural: ModelKind,
}

impl Combination {
    pub fn parse(s: &str) -> Result<Self, UsageError> {
        let bad = |why: &str| UsageError(format!("bad combination {s:?}: {why}"));
        let kinds = s
            .split('+')
            .map(str::parse)
            .collect::<Result<Vec<ModelKind>, _>>()?;
        let ngrams: Vec<ModelKind> = kinds.iter().copied().filter(|k| k.is_ngram()).collect();
        let neural: Vec<ModelKind> = kinds.iter().copied().filter(|k| !k.is_ngram()).collect();
        let [ngram] = ngrams[..] else {
            return Err(bad("exactly one n-gram model is required"));
        };
        match neural[..] {
            [neural] if kinds.len() == 2 => Ok(Self {
                ngram,
                word2vec: None,
                neural,
            }),
            [a, b] if kinds.len() == 3 => {
                let (w, d) = match (a.is_cbow(), b.is_cbow()) {
                    (true, false) => (a, b),
                    (false, true) => (b, a),
                    (true, true) if a != b => (a, b),
                    _ => return Err(bad("three-way mixtures need one CBOW model")),
                };
                Ok(Self {
                    ngram,
                    word2vec: Some(w),
                    neural: d,
                })
            }
            _ => Err(bad("use two or three distinct models")),
        }
    }

    /// Canonical name: neural, then CBOW, then n-gram.
    pub fn name(&self) -> String {
        match self.word2vec {
            Some(w) => format!("{}+{}+{}", self.neural, w, self.ngram),
            None => format!("{}+{}", self.neural, self.ngram),
        }
    }

    /// Component order expected by the mixture weights: n-gram, [CBOW,] neural.
    pub fn components(&self) -> Vec<ModelKind> {
        let mut v = vec![self.ngram];
        v.extend(self.word2vec);
        v.push(self.neural);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new(profile: Profile) -> Self {
        let mut values: BTreeMap<String, String> = COMMON
            .iter()
            .map(|&(k, v)| (k.to_string(), v.to_string()))
            .collect();
        values.insert("profile".into(), profile.name().into());
        for &(k, v) in profile.defaults() {
            values.insert(k.into(), v.into());
        }
        Self { values }
    }

    /// Parses `key = value` lines; `#` starts a comment. A `profile` key
    /// anywhere in the file selects the base profile.
    pub fn parse(text: &str, profile_override: Option<&str>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("config line {}: expected key = value", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let profile_name = profile_override
            .map(str::to_string)
            .or_else(|| pairs.iter().rev().find(|(k, _)| k == "profile").map(|(_, v)| v.clone()))
            .unwrap_or_else(|| "desk".into());
        let profile = Profile::parse(&profile_name)
            .ok_or_else(|| UsageError(format!("unknown profile {profile_name:?} (desk, paper)")))?;
        let mut cfg = Self::new(profile);
        for (k, v) in pairs {
            if k != "profile" {
                cfg.set(&k, &v)?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, profile_override: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, profile_override)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "profile" {
            return Err(UsageError("profile can only be chosen by --profile or the config file".into()).into());
        }
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(UsageError(format!("unknown config key {key:?}")).into()),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| UsageError(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map_or("", String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| UsageError(format!("config key {key} has invalid value {v:?}")).into())
    }

    /// The resolved configuration as `key = value` text, sorted by key.
    pub fn to_text(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn profile(&self) -> &str {
        self.get("profile")
    }

    pub fn corpus(&self) -> Result<PathBuf> {
        let c = self.get("corpus");
        if c.is_empty() {
            return Err(UsageError("no corpus configured (set corpus = PATH)".into()).into());
        }
        Ok(PathBuf::from(c))
    }

    pub fn workdir(&self) -> PathBuf {
        PathBuf::from(self.get("workdir"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.typed("seed")
    }

    pub fn min_count(&self) -> Result<u64> {
        self.typed("min_count")
    }

    pub fn ngram_order(&self) -> Result<usize> {
        let n: usize = self.typed("ngram.order")?;
        if n < 1 {
            return Err(UsageError("ngram.order must be at least 1".into()).into());
        }
        Ok(n)
    }

    pub fn mle_options(&self) -> Result<MleOptions> {
        Ok(MleOptions {
            backoff: self.typed("ngram.backoff")?,
            unigram_fallback: self.typed("ngram.unigram_fallback")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.typed("train.learning_rate")?,
            epochs: self.typed("train.epochs")?,
            seed: self.seed()?,
            init_scale: self.typed("train.init_scale")?,
            weight_decay: self.typed("train.weight_decay")?,
            clip_norm: self.typed("train.clip_norm")?,
            bptt: self.typed("train.bptt")?,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn architecture(&self, kind: ModelKind) -> Result<Architecture> {
        let cbow = |weighting| -> Result<Architecture> {
            Ok(Architecture::Cbow {
                dim: self.typed("cbow.dim")?,
                window: self.typed("cbow.window")?,
                negatives: self.typed("cbow.negatives")?,
                weighting,
            })
        };
        let arch = match kind {
            ModelKind::Nlm => Architecture::Nlm {
                dim: self.typed("nlm.dim")?,
                window: self.typed("nlm.window")?,
                hidden: self.typed("nlm.hidden")?,
            },
            ModelKind::Cbow => cbow(ContextWeighting::Mean)?,
            ModelKind::CbowWeighted => {
                let w = self.get("cbow_weighted.weighting");
                match ContextWeighting::parse(w) {
                    Some(ContextWeighting::Mean) | None => {
                        return Err(UsageError(format!(
                            "cbow_weighted.weighting must be position or reversed-position, got {w:?}"
                        ))
                        .into())
                    }
                    Some(weighting) => cbow(weighting)?,
                }
            }
            ModelKind::Rnn => Architecture::Rnn {
                dim: self.typed("rnn.dim")?,
            },
            ModelKind::Lstm => Architecture::Lstm {
                dim: self.typed("lstm.dim")?,
                hidden: self.typed("lstm.hidden")?,
            },
            ModelKind::Ngram | ModelKind::NgramKn => {
                return Err(anyhow!("{kind} is not a neural model"))
            }
        };
        arch.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(arch)
    }

    /// Weights used for a mixture that has not been tuned.
    pub fn default_weights(&self, c: &Combination) -> Result<MixtureWeights> {
        let w = match c.word2vec {
            Some(_) => MixtureWeights::Three {
                lambda1: self.typed("mixture.lambda1")?,
                lambda2: self.typed("mixture.lambda2")?,
            },
            None => MixtureWeights::Two {
                lambda: self.typed(&format!("mixture.{}", c.neural))?,
            },
        };
        w.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(w)
    }

    pub fn objective(&self) -> Result<Objective> {
        let v = self.get("tune.objective");
        Objective::parse(v)
            .ok_or_else(|| UsageError(format!("unknown tuning objective {v:?} (map, p@1, r@10, f1)")).into())
    }

    pub fn tune_step(&self) -> Result<f64> {
        self.typed("tune.step")
    }

    pub fn combinations(&self) -> Result<Vec<Combination>> {
        list(self.get("tune.combinations"))
            .map(|s| Combination::parse(s).map_err(Into::into))
            .collect()
    }

    pub fn eval_targets(&self) -> Result<Vec<Target>> {
        list(self.get("eval.models"))
            .map(|s| Target::parse(s).map_err(Into::into))
            .collect()
    }

    pub fn overlap_mode(&self) -> Result<OverlapMode> {
        match self.get("eval.overlap") {
            "jaccard" => Ok(OverlapMode::Jaccard),
            "intersection" => Ok(OverlapMode::Intersection),
            other => Err(UsageError(format!("unknown overlap mode {other:?} (jaccard, intersection)")).into()),
        }
    }

    pub fn eval_k(&self) -> Result<usize> {
        self.typed("eval.k")
    }

    pub fn recommend_k(&self) -> Result<usize> {
        self.typed("recommend.k")
    }

    pub fn synth_params(&self) -> Result<crate::synth::SynthParams> {
        Ok(crate::synth::SynthParams {
            sequences: self.typed("synth.sequences")?,
            vocab: self.typed("synth.vocab")?,
            held_out: self.typed("synth.held_out")?,
            injection: self.typed("synth.injection")?,
            seed: self.seed()?,
        })
    }
}

fn list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}
