pub mod bpe;
pub mod error;
pub mod metrics;
pub mod par;

pub use error::{Error, Result};
pub mod synthlang;
pub mod corpus;
pub mod dataaug;
pub mod nn;
pub mod vocab;
pub mod morpho_encoder;
pub mod seq2seq;
pub mod training;
pub mod decoding;
pub mod pipeline;
#[cfg(test)]
pub(crate) mod testutil;
