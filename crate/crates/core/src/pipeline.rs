//! Batch evaluation and generation sweeps.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoding::{generate, SamplerConfig, UNK};
use crate::intrinsic::{self, ConcretenessConfig};
use crate::probes::story_logprob;
use crate::relatedness::{self, PcScope, SifConfig, SifModel};
use crate::report::Observation;
use crate::resources::LexiconSet;
use crate::schema::{EvalRecord, Upos};
use crate::synthetic::TagLexicon;
use crate::textops::split_sentences;
use crate::{LmScorer, Result, SequenceScorer};

/// Token placed between prompt and story in language-model training
/// sequences and generation contexts.
pub const PROMPT_SEP: &str = "<sep>";

/// `prompt <sep> story` for every record.
pub fn training_sequences(records: &[EvalRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            let mut seq = r.prompt_tokens().into_owned();
            seq.push(PROMPT_SEP.to_owned());
            seq.extend(r.tokens.iter().cloned());
            seq
        })
        .collect()
}

/// `prompt <sep>`: the context a story is generated or scored after.
pub fn story_context(record: &EvalRecord) -> Vec<String> {
    let mut ctx = record.prompt_tokens().into_owned();
    ctx.push(PROMPT_SEP.to_owned());
    ctx
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub sif: SifConfig,
    pub concreteness: ConcretenessConfig,
}

/// All metric values of one record; `None` marks an undefined value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub id: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub values: BTreeMap<String, Option<f64>>,
}

impl RecordMetrics {
    pub fn observations(&self) -> impl Iterator<Item = Observation> + '_ {
        self.values
            .iter()
            .map(|(name, v)| Observation::new(name.as_str(), self.model.as_str(), self.k, *v))
    }
}

/// Every metric name [`evaluate`] can emit.
pub fn metric_names() -> Vec<String> {
    let mut names = Vec::new();
    for n in 1..=3 {
        names.push(format!("distinct_{n}"));
        names.push(format!("pos_distinct_{n}"));
        names.push(format!("overlap_{n}"));
    }
    for p in Upos::ALL {
        names.push(format!("pos_{p}"));
    }
    names.extend(
        [
            "mean_log_unigram",
            "stopword_frac",
            "mean_sent_len",
            "noun_concreteness",
            "verb_concreteness",
            "sent_similarity",
            "entity_usage_rate",
            "unique_entities",
            "story_logprob",
            "model_logprob",
        ]
        .map(String::from),
    );
    names.sort();
    names
}

fn scope_key(r: &EvalRecord, scope: PcScope) -> (String, Option<usize>) {
    match scope {
        PcScope::ModelK => (r.model.clone(), r.k),
        PcScope::Model => (r.model.clone(), None),
        PcScope::Corpus => (String::new(), None),
    }
}

fn record_metrics(
    r: &EvalRecord,
    lex: &LexiconSet,
    cfg: &EvalConfig,
    sif: Option<&SifModel<'_>>,
    scorer: Option<&dyn SequenceScorer>,
) -> RecordMetrics {
    let im = intrinsic::compute(r, lex, &cfg.concreteness);
    let rm = relatedness::compute(r, sif);
    let mut values = BTreeMap::new();
    let mut put = |name: String, v: Option<f64>| {
        values.insert(name, v);
    };
    for n in 1..=3 {
        put(format!("distinct_{n}"), im.distinct_n.get(&n).copied());
        put(format!("pos_distinct_{n}"), im.pos_distinct_n.get(&n).copied());
        put(format!("overlap_{n}"), rm.ngram_overlap.get(&n).copied());
    }
    for p in Upos::ALL {
        put(
            format!("pos_{p}"),
            im.pos_dist.as_ref().map(|d| d.get(&p).copied().unwrap_or(0.0)),
        );
    }
    put("mean_log_unigram".into(), im.mean_log_unigram);
    put("stopword_frac".into(), im.stopword_frac);
    put("mean_sent_len".into(), im.mean_sent_len);
    put("noun_concreteness".into(), im.noun_concreteness);
    put("verb_concreteness".into(), im.verb_concreteness);
    put("sent_similarity".into(), rm.sent_similarity);
    put("entity_usage_rate".into(), rm.entity_usage_rate);
    put("unique_entities".into(), rm.unique_entities.map(|u| u as f64));
    put(
        "story_logprob".into(),
        r.trace.as_ref().and_then(|t| story_logprob(t).ok()),
    );
    put(
        "model_logprob".into(),
        scorer.map(|s| s.score_sequence(&story_context(r), &r.tokens)),
    );
    RecordMetrics {
        id: r.id.clone(),
        model: r.model.clone(),
        k: r.k,
        values,
    }
}

/// Metrics for every record, in input order.
///
/// The SIF common component is fitted once per batch chosen by
/// `cfg.sif.pc_scope`. A batch too small to fit leaves its similarity values
/// undefined. `model_logprob` is only computed when a scorer is given; it
/// scores each story after `prompt <sep>`.
pub fn evaluate(
    records: &[EvalRecord],
    lex: &LexiconSet,
    cfg: &EvalConfig,
    scorer: Option<&dyn SequenceScorer>,
) -> Vec<RecordMetrics> {
    let mut batches: BTreeMap<(String, Option<usize>), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        batches.entry(scope_key(r, cfg.sif.pc_scope)).or_default().push(r);
    }
    let mut sif: BTreeMap<(String, Option<usize>), SifModel<'_>> = BTreeMap::new();
    if let (Some(emb), Some(uni)) = (&lex.embeddings, &lex.unigrams) {
        for (key, batch) in &batches {
            match SifModel::fit(batch.iter().copied(), emb, uni, cfg.sif) {
                Ok(m) => {
                    sif.insert(key.clone(), m);
                }
                Err(e) => log::warn!("sentence similarity skipped for batch {key:?}: {e}"),
            }
        }
    }
    records
        .par_iter()
        .map(|r| record_metrics(r, lex, cfg, sif.get(&scope_key(r, cfg.sif.pc_scope)), scorer))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub model_name: String,
    pub k: usize,
    /// Story `i` samples from seed `seed ^ i`.
    pub seed: u64,
    pub target_len: usize,
    pub temperature: f64,
}

/// One generated story per prompt record, after `prompt <sep>`. The
/// separator and `<unk>` are banned along with the model's end-of-text token.
/// Records are annotated when a tagger is given.
pub fn generate_records<M: LmScorer>(
    model: &M,
    prompts: &[EvalRecord],
    cfg: &GenConfig,
    tagger: Option<&TagLexicon>,
) -> Result<Vec<EvalRecord>> {
    let banned: BTreeSet<usize> = (0..model.vocab_size())
        .filter(|&i| matches!(model.token(i), PROMPT_SEP | UNK))
        .collect();
    prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let sampler = SamplerConfig {
                k: cfg.k,
                temperature: cfg.temperature,
                banned: banned.clone(),
                target_len: cfg.target_len,
                seed: cfg.seed ^ i as u64,
            };
            let g = generate(model, &story_context(p), &sampler)?;
            let prompt_tokens = p.prompt_tokens().into_owned();
            Ok(EvalRecord {
                id: format!("{}-k{}", p.id, cfg.k),
                model: cfg.model_name.clone(),
                k: Some(cfg.k),
                prompt_text: p.prompt_text.clone(),
                story_text: g.tokens.join(" "),
                sent_bounds: split_sentences(&g.tokens),
                annotations: tagger.map(|t| t.annotate(&g.tokens)),
                trace: Some(g.trace),
                prompt_annos: p
                    .prompt_annos
                    .clone()
                    .or_else(|| tagger.map(|t| t.annotate(&prompt_tokens))),
                prompt_tokens: Some(prompt_tokens),
                tokens: g.tokens,
            })
        })
        .collect()
}
