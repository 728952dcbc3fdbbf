//! Kernel methods for cross-source binary text classification.
//!
//! * [`corpus`]: JSON-lines article corpora with a cross-source split.
//! * [`ngram`]: character n-gram profiles, PBSK/HISK kernels and Gram blocks.
//! * [`learner`]: ridge and kernel ridge regression with λ tuning.
//! * [`domain_adapt`]: similarity-feature domain adaptation.
//! * [`eval`]: accuracy and McNemar testing.
//! * [`explain`]: discriminative n-gram, word and bigram ranking.
//! * [`experiment`]: end-to-end experiment runner used by the CLI.
//! * [`prepare`]: conversion of raw dumps into corpora.
//! * [`synth`]: deterministic synthetic corpora with a source confounder.

pub mod corpus;
pub mod domain_adapt;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod explain;
pub mod formats;
pub mod learner;
pub mod matrix;
pub mod ngram;
pub mod prepare;
pub mod synth;

pub use error::{Error, Result};
