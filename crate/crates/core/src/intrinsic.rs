//! Per-story metrics that need no prompt: lexical diversity, word rareness,
//! stopword use, sentence length, part-of-speech statistics and concreteness.

use std::collections::BTreeMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::resources::{ConcretenessLexicon, LexiconSet, StopwordList, UnigramTable};
use crate::schema::{EvalRecord, Upos};
use crate::textops::extract_ngrams;
use crate::Result;

/// Unique n-grams over total n-grams; `None` when the text has no n-gram.
pub fn distinct_n<T: Eq + Hash>(tokens: &[T], n: usize) -> Result<Option<f64>> {
    let set = extract_ngrams(tokens, n)?;
    Ok((set.total > 0).then(|| set.unique() as f64 / set.total as f64))
}

/// Mean natural-log unigram probability, OOV words at the table floor.
pub fn mean_log_unigram_prob<S: AsRef<str>>(tokens: &[S], unigrams: &UnigramTable) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    let sum: f64 = tokens.iter().map(|t| unigrams.prob(t.as_ref()).ln()).sum();
    Some(sum / tokens.len() as f64)
}

pub fn stopword_fraction<S: AsRef<str>>(tokens: &[S], stops: &StopwordList) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    let hits = tokens.iter().filter(|t| stops.contains(t.as_ref())).count();
    Some(hits as f64 / tokens.len() as f64)
}

/// Words per sentence; `None` for a record with no sentences.
pub fn mean_sentence_length(record: &EvalRecord) -> Option<f64> {
    if record.sent_bounds.is_empty() {
        return None;
    }
    let words: usize = record.sent_bounds.iter().map(|(s, e)| e - s).sum();
    Some(words as f64 / record.sent_bounds.len() as f64)
}

fn pos_tags(record: &EvalRecord) -> Option<Vec<Upos>> {
    record
        .annotations
        .as_ref()
        .map(|a| a.iter().map(|t| t.pos).collect())
}

/// Relative frequency of each tag present in the story.
pub fn pos_distribution(record: &EvalRecord) -> Option<BTreeMap<Upos, f64>> {
    let tags = pos_tags(record)?;
    if tags.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<Upos, usize> = BTreeMap::new();
    for t in &tags {
        *counts.entry(*t).or_default() += 1;
    }
    let n = tags.len() as f64;
    Some(counts.into_iter().map(|(t, c)| (t, c as f64 / n)).collect())
}

/// distinct-n over the POS tag sequence.
pub fn pos_distinct_n(record: &EvalRecord, n: usize) -> Result<Option<f64>> {
    match pos_tags(record) {
        Some(tags) => distinct_n(&tags, n),
        None => Ok(None),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosClass {
    Noun,
    Verb,
}

/// Which tags count towards the noun and verb pools.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcretenessConfig {
    /// Count PROPN as nouns.
    pub include_propn: bool,
    /// Count AUX as verbs.
    pub include_aux: bool,
}

impl Default for ConcretenessConfig {
    fn default() -> Self {
        ConcretenessConfig {
            include_propn: false,
            include_aux: true,
        }
    }
}

impl ConcretenessConfig {
    fn admits(&self, class: PosClass, pos: Upos) -> bool {
        match class {
            PosClass::Noun => pos == Upos::Noun || (self.include_propn && pos == Upos::Propn),
            PosClass::Verb => pos == Upos::Verb || (self.include_aux && pos == Upos::Aux),
        }
    }
}

/// Mean rating over the tokens of `class` whose lemma the lexicon knows.
pub fn mean_concreteness(
    record: &EvalRecord,
    lexicon: &ConcretenessLexicon,
    class: PosClass,
    cfg: &ConcretenessConfig,
) -> Option<f64> {
    let annos = record.annotations.as_ref()?;
    let (sum, n) = annos
        .iter()
        .filter(|a| cfg.admits(class, a.pos))
        .filter_map(|a| lexicon.rating(&a.lemma))
        .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicMetrics {
    pub distinct_n: BTreeMap<usize, f64>,
    pub mean_log_unigram: Option<f64>,
    pub stopword_frac: Option<f64>,
    pub mean_sent_len: Option<f64>,
    pub pos_dist: Option<BTreeMap<Upos, f64>>,
    pub pos_distinct_n: BTreeMap<usize, f64>,
    pub noun_concreteness: Option<f64>,
    pub verb_concreteness: Option<f64>,
}

pub fn compute(record: &EvalRecord, lex: &LexiconSet, cfg: &ConcretenessConfig) -> IntrinsicMetrics {
    let mut m = IntrinsicMetrics::default();
    for n in 1..=3 {
        if let Some(v) = distinct_n(&record.tokens, n).expect("order >= 1") {
            m.distinct_n.insert(n, v);
        }
        if let Some(v) = pos_distinct_n(record, n).expect("order >= 1") {
            m.pos_distinct_n.insert(n, v);
        }
    }
    m.mean_log_unigram = lex
        .unigrams
        .as_ref()
        .and_then(|u| mean_log_unigram_prob(&record.tokens, u));
    m.stopword_frac = lex
        .stopwords
        .as_ref()
        .and_then(|s| stopword_fraction(&record.tokens, s));
    m.mean_sent_len = mean_sentence_length(record);
    m.pos_dist = pos_distribution(record);
    if let Some(lexicon) = &lex.concreteness {
        m.noun_concreteness = mean_concreteness(record, lexicon, PosClass::Noun, cfg);
        m.verb_concreteness = mean_concreteness(record, lexicon, PosClass::Verb, cfg);
    }
    m
}
