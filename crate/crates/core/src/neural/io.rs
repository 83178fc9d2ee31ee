//! Model files: a line-oriented text header naming the architecture,
//! training settings and tensor shapes, terminated by `end`, followed by
//! every tensor as row-major little-endian f64.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::cbow::{CbowParams, ContextWeighting};
use super::lstm::LstmParams;
use super::nlm::NlmParams;
use super::rnn::RnnParams;
use super::tensor::{Matrix, Parameters};
use super::train::{Architecture, Network, TrainConfig};
use super::NeuralModel;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;

const MAGIC: &str = "nextword-neural 1";
const WHAT: &str = "neural model file";

impl Network {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        match self {
            Network::Nlm(p) => p.tensors(),
            Network::Cbow(p) => p.tensors(),
            Network::Rnn(p) => p.tensors(),
            Network::Lstm(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Network::Nlm(p) => p.tensors_mut(),
            Network::Cbow(p) => p.tensors_mut(),
            Network::Rnn(p) => p.tensors_mut(),
            Network::Lstm(p) => p.tensors_mut(),
        }
    }

    fn zeros(arch: Architecture, vocab: usize) -> Self {
        match arch {
            Architecture::Nlm { dim, window, hidden } => {
                Network::Nlm(NlmParams::zeros(vocab, dim, window, hidden))
            }
            Architecture::Cbow {
                dim,
                window,
                negatives,
                weighting,
            } => Network::Cbow(CbowParams::zeros(vocab, dim, window, negatives, weighting)),
            Architecture::Rnn { dim } => Network::Rnn(RnnParams::zeros(vocab, dim)),
            Architecture::Lstm { dim, hidden } => {
                Network::Lstm(LstmParams::zeros(vocab, dim, hidden))
            }
        }
    }
}

impl NeuralModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = String::new();
        let _ = writeln!(h, "{MAGIC}");
        let _ = writeln!(h, "kind {}", self.kind());
        let _ = writeln!(h, "vocab {}", self.vocab_size());
        let _ = writeln!(h, "unk_trained {}", self.unk_trained);
        match self.architecture {
            Architecture::Nlm { dim, window, hidden } => {
                let _ = writeln!(h, "dim {dim}\nwindow {window}\nhidden {hidden}");
            }
            Architecture::Cbow {
                dim,
                window,
                negatives,
                weighting,
            } => {
                let _ = writeln!(
                    h,
                    "dim {dim}\nwindow {window}\nnegatives {negatives}\nweighting {}",
                    weighting.as_str()
                );
            }
            Architecture::Rnn { dim } => {
                let _ = writeln!(h, "dim {dim}");
            }
            Architecture::Lstm { dim, hidden } => {
                let _ = writeln!(h, "dim {dim}\nhidden {hidden}");
            }
        }
        let c = &self.config;
        let _ = writeln!(h, "learning_rate {}", c.learning_rate);
        let _ = writeln!(h, "epochs {}", c.epochs);
        let _ = writeln!(h, "seed {}", c.seed);
        let _ = writeln!(h, "init_scale {}", c.init_scale);
        let _ = writeln!(h, "weight_decay {}", c.weight_decay);
        let _ = writeln!(h, "clip_norm {}", c.clip_norm);
        let _ = writeln!(h, "bptt {}", c.bptt);
        let tensors = self.network.tensors();
        for (name, t) in &tensors {
            let _ = writeln!(h, "tensor {name} {} {}", t.rows(), t.cols());
        }
        h.push_str("end\n");
        let mut out = h.into_bytes();
        for (_, t) in tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::format(WHAT, line, msg);
        let mut pos = 0;
        let mut lines = Vec::new();
        loop {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| err(lines.len() + 1, "header is not terminated"))?;
            let line = std::str::from_utf8(&rest[..nl])
                .map_err(|_| err(lines.len() + 1, "header is not UTF-8"))?;
            pos += nl + 1;
            if line == "end" {
                break;
            }
            lines.push(line);
        }
        if lines.first() != Some(&MAGIC) {
            return Err(err(1, "not a neural model file"));
        }

        let mut fields = std::collections::BTreeMap::new();
        let mut shapes = Vec::new();
        for (i, line) in lines.iter().enumerate().skip(1) {
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| err(i + 1, "expected key and value"))?;
            if key == "tensor" {
                let parts: Vec<&str> = value.split(' ').collect();
                let [name, r, c] = parts[..] else {
                    return Err(err(i + 1, "expected tensor name rows cols"));
                };
                let r: usize = r.parse().map_err(|_| err(i + 1, "bad row count"))?;
                let c: usize = c.parse().map_err(|_| err(i + 1, "bad column count"))?;
                shapes.push((name.to_string(), r, c));
            } else if fields.insert(key, value).is_some() {
                return Err(err(i + 1, "duplicate key"));
            }
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(0, &format!("missing {k}")));
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| err(0, &format!("bad {k}")))
        };
        let real = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| err(0, &format!("bad {k}")))
        };

        let architecture = match get("kind")? {
            "nlm" => Architecture::Nlm {
                dim: num("dim")?,
                window: num("window")?,
                hidden: num("hidden")?,
            },
            "cbow" | "cbow-weighted" => Architecture::Cbow {
                dim: num("dim")?,
                window: num("window")?,
                negatives: num("negatives")?,
                weighting: ContextWeighting::parse(get("weighting")?)
                    .ok_or_else(|| err(0, "bad weighting"))?,
            },
            "rnn" => Architecture::Rnn { dim: num("dim")? },
            "lstm" => Architecture::Lstm {
                dim: num("dim")?,
                hidden: num("hidden")?,
            },
            _ => return Err(err(0, "unknown model kind")),
        };
        architecture.validate()?;
        let config = TrainConfig {
            learning_rate: real("learning_rate")?,
            epochs: num("epochs")?,
            seed: get("seed")?.parse().map_err(|_| err(0, "bad seed"))?,
            init_scale: real("init_scale")?,
            weight_decay: real("weight_decay")?,
            clip_norm: real("clip_norm")?,
            bptt: num("bptt")?,
        };
        let unk_trained = get("unk_trained")?
            .parse()
            .map_err(|_| err(0, "bad unk_trained"))?;
        let vocab = num("vocab")?;

        let mut network = Network::zeros(architecture, vocab);
        let expected: Vec<(String, usize, usize)> = network
            .tensors()
            .iter()
            .map(|(n, t)| (n.to_string(), t.rows(), t.cols()))
            .collect();
        if expected != shapes {
            return Err(err(0, "tensor shapes do not match the architecture"));
        }
        let total: usize = shapes.iter().map(|(_, r, c)| r * c).sum();
        let data = &bytes[pos..];
        if data.len() != total * 8 {
            return Err(err(0, "tensor data has the wrong length"));
        }
        let mut values = data
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
        for t in network.tensors_mut() {
            for v in t.data_mut() {
                *v = values.next().expect("length checked");
            }
        }
        let model = Self {
            network,
            architecture,
            config,
            unk_trained,
        };
        if model.kind() != get("kind")? {
            return Err(err(0, "kind does not match weighting"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
