//! Word predictability from language models and eye-movement analysis.

mod binio;
pub mod corpus;
pub mod error;
pub mod eyedata;
pub mod ngram;
pub mod pipeline;
pub mod rnn;
pub mod scoring;
pub mod topics;
pub mod toy;
mod tsv;

pub use error::{Error, Result};
