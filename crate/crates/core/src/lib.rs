//! Spoken-language-assessment grader: grade-scale classifiers and
//! regressors over chunk features, hard and soft decoding, hierarchical
//! score aggregation, dev-set calibration and evaluation protocols.

pub mod cli;
pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod scale;
pub mod storage;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
