//! Scoring interfaces shared by the probes and the decoder.

/// Scores a target token sequence given a context.
///
/// Implementations must be pure functions of `(context, target)` so probes
/// can call them from parallel workers.
pub trait SequenceScorer: Sync {
    /// Total natural-log probability of `target` following `context`.
    /// An empty target scores 0.
    fn score_sequence(&self, context: &[String], target: &[String]) -> f64;
}

/// A language model with a fixed vocabulary that can also produce
/// next-token distributions.
pub trait LmScorer: SequenceScorer {
    fn vocab_size(&self) -> usize;

    fn token(&self, id: usize) -> &str;

    /// Probability of each vocabulary entry following `context`; sums to 1.
    fn next_dist(&self, context: &[String]) -> Vec<f64>;

    /// Token id that ends a text, if the model has one.
    fn end_of_text(&self) -> Option<usize> {
        None
    }
}

/// Chance-level scorer: every (context, target) pair gets an independent
/// uniform score derived from a hash of the pair and a seed.
#[derive(Clone, Copy, Debug)]
pub struct RandomScorer {
    seed: u64,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        RandomScorer { seed }
    }
}

// FNV-1a over the token bytes with separators, then a SplitMix64 finalizer.
fn fnv_tokens(mut h: u64, tokens: &[String]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    for t in tokens {
        for b in t.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(PRIME);
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SequenceScorer for RandomScorer {
    fn score_sequence(&self, context: &[String], target: &[String]) -> f64 {
        if target.is_empty() {
            return 0.0;
        }
        let h = fnv_tokens(0xcbf2_9ce4_8422_2325 ^ self.seed, context);
        let h = fnv_tokens(h ^ 0x9e37_79b9_7f4a_7c15, target);
        // uniform in (-1, 0]
        -((mix(h) >> 11) as f64 / (1u64 << 53) as f64)
    }
}
