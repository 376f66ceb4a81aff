//! Top-k decoding and the reference n-gram language model.

mod ngram;
mod sampler;

pub use ngram::{train_ngram, NgramModel, BOS, DEFAULT_DISCOUNT, EOS, UNK};
pub use sampler::{generate, top_k_step, Draw, Generation, SamplerConfig};
