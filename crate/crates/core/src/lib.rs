//! Next-word recommendation with statistical, neural and hybrid language
//! models, plus the ranking metrics used to compare them.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod lm;
pub mod neural;
pub mod ngram;

pub use error::{Error, Result};
pub use lm::{
    next_distribution, top_k, Distribution, LanguageModel, Prediction, RecommendationList,
    WordId, FIRST_WORD, PAD, UNK,
};
