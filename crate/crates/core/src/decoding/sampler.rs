use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::schema::TokenTrace;
use crate::scorer::LmScorer;
use crate::{Error, Result, STORY_WORDS};

/// Tolerance on the input distribution's total mass.
const MASS_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Number of most probable tokens kept; the vocabulary size means full
    /// sampling and 1 is greedy.
    pub k: usize,
    pub temperature: f64,
    /// Token ids that are never emitted.
    pub banned: BTreeSet<usize>,
    pub target_len: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        SamplerConfig {
            k,
            temperature: 1.0,
            banned: BTreeSet::new(),
            target_len: STORY_WORDS,
            seed,
        }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.k == 0 || self.k > vocab_size {
            return Err(Error::InvalidSampler(format!(
                "k = {} outside [1, {vocab_size}]",
                self.k
            )));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidSampler(format!(
                "temperature {} is not positive",
                self.temperature
            )));
        }
        if self.target_len == 0 {
            return Err(Error::InvalidSampler("target length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draw {
    pub token: usize,
    /// Log probability of the token under the truncated, renormalized
    /// distribution it was drawn from.
    pub logp: f64,
}

// Higher weight first, then lower id.
fn rank_order(w: &[f64], a: usize, b: usize) -> Ordering {
    w[b].total_cmp(&w[a]).then(a.cmp(&b))
}

/// One top-k draw: banned tokens are zeroed, temperature is applied, the k
/// largest survivors are kept (ties at the boundary go to the lower id), and
/// one categorical draw is made from the renormalized remainder.
pub fn top_k_step(dist: &[f64], cfg: &SamplerConfig, rng: &mut Stream) -> Result<Draw> {
    let mut sum = 0.0;
    for &p in dist {
        if !(p >= 0.0) {
            return Err(Error::NotADistribution { sum: f64::NAN });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::NotADistribution { sum });
    }

    let mut logits: Vec<f64> = dist
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if cfg.banned.contains(&i) || p == 0.0 {
                f64::NEG_INFINITY
            } else {
                p.ln() / cfg.temperature
            }
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllMassBanned);
    }
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
    }
    let weights = logits;

    let mut kept: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    if kept.len() > cfg.k {
        kept.select_nth_unstable_by(cfg.k - 1, |&a, &b| rank_order(&weights, a, b));
        kept.truncate(cfg.k);
    }
    kept.sort_unstable_by(|&a, &b| rank_order(&weights, a, b));

    let total: f64 = kept.iter().map(|&i| weights[i]).sum();
    let target = rng.next_f64() * total;
    let mut acc = 0.0;
    let mut chosen = *kept.last().expect("at least one token survives");
    for &i in &kept {
        acc += weights[i];
        if target < acc {
            chosen = i;
            break;
        }
    }
    Ok(Draw {
        token: chosen,
        logp: (weights[chosen] / total).ln(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub tokens: Vec<String>,
    pub trace: TokenTrace,
}

/// Samples exactly `cfg.target_len` tokens after `prompt`. The model's
/// end-of-text token is banned so generation never stops early.
pub fn generate<M: LmScorer + ?Sized>(model: &M, prompt: &[String], cfg: &SamplerConfig) -> Result<Generation> {
    cfg.validate(model.vocab_size())?;
    let mut step_cfg = cfg.clone();
    if let Some(eot) = model.end_of_text() {
        step_cfg.banned.insert(eot);
    }
    let mut rng = Stream::new(cfg.seed);
    let mut context = prompt.to_vec();
    let mut tokens = Vec::with_capacity(cfg.target_len);
    let mut logps = Vec::with_capacity(cfg.target_len);
    for _ in 0..cfg.target_len {
        let dist = model.next_dist(&context);
        let draw = top_k_step(&dist, &step_cfg, &mut rng)?;
        let tok = model.token(draw.token).to_owned();
        context.push(tok.clone());
        tokens.push(tok);
        logps.push(draw.logp);
    }
    Ok(Generation {
        tokens,
        trace: TokenTrace::per_word(logps, model.vocab_size()),
    })
}
