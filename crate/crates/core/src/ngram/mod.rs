//! Count-based models: unsmoothed maximum likelihood and interpolated
//! Kneser-Ney over a shared n-gram table.

mod kn;
mod mle;
mod table;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use kn::{
    discount_from_count_of_counts, estimate_discounts, KnDiscounts, KneserNey, DEFAULT_DISCOUNT,
};
pub use mle::{mle_distribution, prob_mle, MleOptions};
pub use table::NGramTable;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::lm::{LanguageModel, Prediction, WordId};

pub const DEFAULT_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Smoothing {
    None(MleOptions),
    KneserNey {
        discounts: KnDiscounts,
        uniform_floor: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    table: NGramTable,
    smoothing: Smoothing,
}

impl NGramModel {
    pub fn mle(table: NGramTable, opts: MleOptions) -> Self {
        Self {
            table,
            smoothing: Smoothing::None(opts),
        }
    }

    /// Kneser-Ney with discounts estimated from the table's count-of-counts.
    pub fn kneser_ney(table: NGramTable) -> Result<Self> {
        let discounts = estimate_discounts(&table);
        Self::kneser_ney_with(table, discounts, true)
    }

    pub fn kneser_ney_with(
        table: NGramTable,
        discounts: KnDiscounts,
        uniform_floor: bool,
    ) -> Result<Self> {
        if table.order() < 2 {
            return Err(Error::InvalidConfig(
                "Kneser-Ney smoothing needs order >= 2".into(),
            ));
        }
        if discounts.values().len() != table.order() - 1 {
            return Err(Error::InvalidConfig(
                "one discount per order 2..=N is required".into(),
            ));
        }
        Ok(Self {
            table,
            smoothing: Smoothing::KneserNey {
                discounts,
                uniform_floor,
            },
        })
    }

    pub fn table(&self) -> &NGramTable {
        &self.table
    }

    pub fn smoothing(&self) -> &Smoothing {
        &self.smoothing
    }

    pub fn kind(&self) -> &'static str {
        match self.smoothing {
            Smoothing::None(_) => "ngram",
            Smoothing::KneserNey { .. } => "ngram-kn",
        }
    }

    /// P(w | context) under the model's smoothing; `None` is
    /// no-recommendation.
    pub fn prob(&self, context: &[WordId], w: WordId) -> Option<f64> {
        match &self.smoothing {
            Smoothing::None(opts) => prob_mle(&self.table, context, w, *opts),
            Smoothing::KneserNey {
                discounts,
                uniform_floor,
            } => Some(KneserNey::new(&self.table, discounts, *uniform_floor).prob(context, w)),
        }
    }

    /// Sorted text form: a `#` header (kind, order, vocabulary size, options
    /// and discounts) followed by `n <TAB> w1 … wn <TAB> count` lines.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#nextword-ngram\t1");
        let _ = writeln!(out, "#kind\t{}", self.kind());
        let _ = writeln!(out, "#order\t{}", self.table.order());
        let _ = writeln!(out, "#vocab\t{}", self.table.vocab_size());
        match &self.smoothing {
            Smoothing::None(o) => {
                let _ = writeln!(out, "#backoff\t{}", o.backoff);
                let _ = writeln!(out, "#unigram_fallback\t{}", o.unigram_fallback);
            }
            Smoothing::KneserNey {
                discounts,
                uniform_floor,
            } => {
                let _ = writeln!(out, "#uniform_floor\t{uniform_floor}");
                for (i, d) in discounts.values().iter().enumerate() {
                    let _ = writeln!(out, "#discount\t{}\t{d}", i + 2);
                }
            }
        }
        for n in 1..=self.table.order() {
            for (gram, c) in self.table.ngrams(n) {
                let words: Vec<&str> = gram.iter().map(|&w| vocab.word(w)).collect();
                let _ = writeln!(out, "{n}\t{}\t{c}", words.join(" "));
            }
        }
        out
    }

    pub fn from_text(text: &str, vocab: &Vocabulary) -> Result<Self> {
        const WHAT: &str = "n-gram model file";
        let err = |line: usize, msg: &str| Error::format(WHAT, line, msg);
        let mut kind = None;
        let mut order = None;
        let mut vocab_size = None;
        let mut backoff = None;
        let mut fallback = None;
        let mut floor = None;
        let mut discounts = Vec::new();
        let mut grams = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(header) = line.strip_prefix('#') {
                let mut cols = header.split('\t');
                let key = cols.next().unwrap_or_default();
                let value = cols.next().ok_or_else(|| err(line_no, "header without value"))?;
                let flag = || value.parse::<bool>().map_err(|_| err(line_no, "expected true/false"));
                match key {
                    "nextword-ngram" if value == "1" => {}
                    "nextword-ngram" => return Err(err(line_no, "unsupported version")),
                    "kind" => kind = Some(value.to_string()),
                    "order" => order = value.parse::<usize>().ok(),
                    "vocab" => vocab_size = value.parse::<usize>().ok(),
                    "backoff" => backoff = Some(flag()?),
                    "unigram_fallback" => fallback = Some(flag()?),
                    "uniform_floor" => floor = Some(flag()?),
                    "discount" => {
                        let n: usize = value.parse().map_err(|_| err(line_no, "bad order"))?;
                        let d: f64 = cols
                            .next()
                            .and_then(|d| d.parse().ok())
                            .ok_or_else(|| err(line_no, "bad discount"))?;
                        if n != discounts.len() + 2 {
                            return Err(err(line_no, "discounts out of order"));
                        }
                        discounts.push(d);
                    }
                    _ => return Err(err(line_no, "unknown header")),
                }
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(n), Some(words), Some(count), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(err(line_no, "expected 3 tab-separated columns"));
            };
            let n: usize = n.parse().map_err(|_| err(line_no, "bad order"))?;
            let count: u64 = count.parse().map_err(|_| err(line_no, "bad count"))?;
            let gram = words
                .split(' ')
                .map(|w| match w {
                    crate::corpus::PAD_TOKEN => Some(crate::PAD),
                    crate::corpus::UNK_TOKEN => Some(crate::UNK),
                    _ => vocab.lookup(w),
                })
                .collect::<Option<Vec<WordId>>>()
                .ok_or_else(|| err(line_no, "word not in vocabulary"))?;
            if gram.len() != n || count == 0 {
                return Err(err(line_no, "n-gram length or count mismatch"));
            }
            grams.push((gram, count));
        }
        let order = order.ok_or_else(|| err(0, "missing order"))?;
        if order == 0 || grams.iter().any(|(g, _)| g.len() > order) {
            return Err(err(0, "inconsistent order"));
        }
        if vocab_size != Some(vocab.len()) {
            return Err(err(0, "vocabulary size does not match"));
        }
        let table = NGramTable::from_counts(order, vocab.len(), grams);
        match kind.as_deref() {
            Some("ngram") => Ok(Self::mle(
                table,
                MleOptions {
                    backoff: backoff.ok_or_else(|| err(0, "missing backoff"))?,
                    unigram_fallback: fallback.ok_or_else(|| err(0, "missing unigram_fallback"))?,
                },
            )),
            Some("ngram-kn") => {
                let discounts =
                    KnDiscounts::from_values(discounts).ok_or_else(|| err(0, "discount out of range"))?;
                Self::kneser_ney_with(
                    table,
                    discounts,
                    floor.ok_or_else(|| err(0, "missing uniform_floor"))?,
                )
            }
            _ => Err(err(0, "unknown model kind")),
        }
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        fs::write(path, self.to_text(vocab))?;
        Ok(())
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?, vocab)
    }
}

impl LanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.table.vocab_size()
    }

    fn predict(&self, context: &[WordId]) -> Prediction {
        match &self.smoothing {
            Smoothing::None(opts) => mle_distribution(&self.table, context, *opts),
            Smoothing::KneserNey {
                discounts,
                uniform_floor,
            } => KneserNey::new(&self.table, discounts, *uniform_floor).distribution(context),
        }
    }
}
