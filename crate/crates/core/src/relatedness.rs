//! Prompt-conditioned metrics: n-gram overlap with the prompt, SIF sentence
//! similarity, and prompt entity usage.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::Hash;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::resources::{EmbeddingTable, UnigramTable};
use crate::schema::{AnnotatedToken, EvalRecord};
use crate::textops::{extract_ngrams, split_sentences};
use crate::{Error, Result};

/// Residuals shorter than this fraction of the input vector count as zero.
const DEGENERATE_RATIO: f64 = 1e-9;

/// Fraction of story n-gram occurrences that occur anywhere in the prompt.
pub fn ngram_overlap<T: Eq + Hash>(story: &[T], prompt: &[T], n: usize) -> Result<Option<f64>> {
    let story_grams = extract_ngrams(story, n)?;
    if story_grams.total == 0 {
        return Ok(None);
    }
    let prompt_grams: HashSet<&[T]> = prompt.windows(n).collect();
    let hits: usize = story_grams
        .counts
        .iter()
        .filter(|(g, _)| prompt_grams.contains(*g))
        .map(|(_, c)| c)
        .sum();
    Ok(Some(hits as f64 / story_grams.total as f64))
}

/// Batch over which the common component is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcScope {
    /// One batch per (model, k) group.
    #[default]
    ModelK,
    /// One batch per model, pooling all k.
    Model,
    /// Everything evaluated in the run.
    Corpus,
}

impl PcScope {
    pub fn as_str(self) -> &'static str {
        match self {
            PcScope::ModelK => "model-k",
            PcScope::Model => "model",
            PcScope::Corpus => "corpus",
        }
    }
}

impl std::str::FromStr for PcScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "model-k" => Ok(PcScope::ModelK),
            "model" => Ok(PcScope::Model),
            "corpus" => Ok(PcScope::Corpus),
            other => Err(format!("unknown pc scope `{other}` (expected model-k, model or corpus)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SifConfig {
    /// Smoothing weight `a` in `a / (a + p(w))`.
    pub a: f64,
    pub pc_removal: bool,
    pub pc_scope: PcScope,
}

impl Default for SifConfig {
    fn default() -> Self {
        SifConfig {
            a: 1e-3,
            pc_removal: true,
            pc_scope: PcScope::ModelK,
        }
    }
}

/// SIF-weighted average of the embeddable tokens, before component removal.
pub fn sif_embed<S: AsRef<str>>(
    tokens: &[S],
    emb: &EmbeddingTable,
    unigrams: &UnigramTable,
    cfg: &SifConfig,
) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; emb.dimension()];
    let mut m = 0usize;
    for tok in tokens {
        let tok = tok.as_ref();
        let Some(v) = emb.get(tok) else { continue };
        let w = cfg.a / (cfg.a + unigrams.prob(tok));
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
        m += 1;
    }
    if m == 0 {
        return None;
    }
    acc.iter_mut().for_each(|a| *a /= m as f64);
    Some(acc)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// First right singular vector of the stacked batch (unit length, sign
/// unspecified). Not mean-centred.
pub fn first_principal_component(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    if vectors.len() < 2 {
        return Err(Error::BatchTooSmall(vectors.len()));
    }
    let d = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for v in vectors {
        for i in 0..d {
            for j in i..d {
                gram[(i, j)] += v[i] * v[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.imax();
    let mut u: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let n = norm(&u);
    u.iter_mut().for_each(|x| *x /= n);
    Ok(u)
}

/// `v - u u^T v` for unit `u`.
pub fn project_out(v: &[f64], u: &[f64]) -> Vec<f64> {
    let c = dot(u, v);
    v.iter().zip(u).map(|(x, y)| x - c * y).collect()
}

#[derive(Clone, Debug)]
pub struct PcRemoval {
    pub component: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
    /// Residuals that collapsed to (numerically) zero.
    pub degenerate: Vec<bool>,
}

pub fn remove_first_pc(vectors: &[Vec<f64>]) -> Result<PcRemoval> {
    let component = first_principal_component(vectors)?;
    let residuals: Vec<Vec<f64>> = vectors.iter().map(|v| project_out(v, &component)).collect();
    let degenerate = vectors
        .iter()
        .zip(&residuals)
        .map(|(v, r)| norm(r) <= DEGENERATE_RATIO * norm(v))
        .collect();
    Ok(PcRemoval {
        component,
        residuals,
        degenerate,
    })
}

/// SIF embedder with an optional common component fitted on a batch.
#[derive(Clone, Debug)]
pub struct SifModel<'a> {
    emb: &'a EmbeddingTable,
    unigrams: &'a UnigramTable,
    cfg: SifConfig,
    component: Option<Vec<f64>>,
}

fn prompt_sentences(record: &EvalRecord) -> Vec<Vec<String>> {
    let toks = record.prompt_tokens();
    split_sentences(&toks)
        .into_iter()
        .map(|(s, e)| toks[s..e].to_vec())
        .collect()
}

impl<'a> SifModel<'a> {
    /// Model without component removal, whatever `cfg.pc_removal` says.
    pub fn unfitted(emb: &'a EmbeddingTable, unigrams: &'a UnigramTable, cfg: SifConfig) -> Self {
        SifModel {
            emb,
            unigrams,
            cfg,
            component: None,
        }
    }

    /// Fits the common component on every prompt and story sentence of
    /// `records` when `cfg.pc_removal` is set.
    pub fn fit<'r>(
        records: impl IntoIterator<Item = &'r EvalRecord>,
        emb: &'a EmbeddingTable,
        unigrams: &'a UnigramTable,
        cfg: SifConfig,
    ) -> Result<Self> {
        let mut model = SifModel::unfitted(emb, unigrams, cfg);
        if cfg.pc_removal {
            let mut batch = Vec::new();
            for r in records {
                for s in prompt_sentences(r) {
                    batch.extend(sif_embed(&s, emb, unigrams, &cfg));
                }
                for s in r.sentences() {
                    batch.extend(sif_embed(s, emb, unigrams, &cfg));
                }
            }
            model.component = Some(first_principal_component(&batch)?);
        }
        Ok(model)
    }

    /// Fits on an explicit batch of tokenized sentences.
    pub fn fit_sentences<S: AsRef<str>>(
        sentences: &[Vec<S>],
        emb: &'a EmbeddingTable,
        unigrams: &'a UnigramTable,
        cfg: SifConfig,
    ) -> Result<Self> {
        let mut model = SifModel::unfitted(emb, unigrams, cfg);
        if cfg.pc_removal {
            let batch: Vec<Vec<f64>> = sentences
                .iter()
                .filter_map(|s| sif_embed(s, emb, unigrams, &cfg))
                .collect();
            model.component = Some(first_principal_component(&batch)?);
        }
        Ok(model)
    }

    pub fn component(&self) -> Option<&[f64]> {
        self.component.as_deref()
    }

    /// Final sentence vector; `None` if nothing is embeddable or the residual
    /// after component removal is zero.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Option<Vec<f64>> {
        let v = sif_embed(tokens, self.emb, self.unigrams, &self.cfg)?;
        let out = match &self.component {
            Some(u) => project_out(&v, u),
            None => v.clone(),
        };
        (norm(&out) > DEGENERATE_RATIO * norm(&v)).then_some(out)
    }

    /// Mean cosine over all (prompt sentence, story sentence) pairs.
    pub fn story_prompt_similarity(&self, record: &EvalRecord) -> Option<f64> {
        let prompt: Vec<Vec<f64>> = prompt_sentences(record)
            .iter()
            .filter_map(|s| self.embed(s))
            .collect();
        let story: Vec<Vec<f64>> = record.sentences().filter_map(|s| self.embed(s)).collect();
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for p in &prompt {
            for s in &story {
                sum += cosine(p, s);
                pairs += 1;
            }
        }
        (pairs > 0).then(|| sum / pairs as f64)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0)
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalized surface text of every entity span in IOB-tagged tokens, in
/// order of appearance.
pub fn entity_spans(annos: &[AnnotatedToken]) -> Vec<String> {
    let mut spans = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for a in annos {
        let (prefix, kind) = match a.ent.split_once('-') {
            Some((p, k)) => (p, k),
            None => ("O", ""),
        };
        let continues = prefix == "I" && matches!(&current, Some((k, _)) if k == kind);
        if continues {
            current.as_mut().unwrap().1.push(&a.surface);
            continue;
        }
        if let Some((_, words)) = current.take() {
            spans.push(normalize_text(&words.join(" ")));
        }
        if prefix != "O" {
            current = Some((kind.to_owned(), vec![&a.surface]));
        }
    }
    if let Some((_, words)) = current {
        spans.push(normalize_text(&words.join(" ")));
    }
    spans
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityUsage {
    /// Share of distinct prompt entities found in the story text.
    pub rate: Option<f64>,
    /// Distinct entities mentioned in the story.
    pub unique_entities: usize,
}

/// Needs story annotations; the rate additionally needs prompt annotations
/// with at least one entity.
pub fn entity_usage(record: &EvalRecord) -> Option<EntityUsage> {
    let story_annos = record.annotations.as_ref()?;
    let unique_entities = entity_spans(story_annos).into_iter().collect::<BTreeSet<_>>().len();
    let rate = record.prompt_annos.as_ref().and_then(|annos| {
        let prompt_entities: BTreeSet<String> = entity_spans(annos).into_iter().collect();
        if prompt_entities.is_empty() {
            return None;
        }
        let story = normalize_text(&record.tokens.join(" "));
        let used = prompt_entities.iter().filter(|e| story.contains(e.as_str())).count();
        Some(used as f64 / prompt_entities.len() as f64)
    });
    Some(EntityUsage {
        rate,
        unique_entities,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelatednessMetrics {
    pub ngram_overlap: BTreeMap<usize, f64>,
    pub sent_similarity: Option<f64>,
    pub entity_usage_rate: Option<f64>,
    pub unique_entities: Option<usize>,
}

pub fn compute(record: &EvalRecord, sif: Option<&SifModel<'_>>) -> RelatednessMetrics {
    let mut m = RelatednessMetrics::default();
    let prompt = record.prompt_tokens();
    for n in 1..=3 {
        if let Some(v) = ngram_overlap(&record.tokens, &prompt, n).expect("order >= 1") {
            m.ngram_overlap.insert(n, v);
        }
    }
    m.sent_similarity = sif.and_then(|s| s.story_prompt_similarity(record));
    if let Some(usage) = entity_usage(record) {
        m.entity_usage_rate = usage.rate;
        m.unique_entities = Some(usage.unique_entities);
    }
    m
}
