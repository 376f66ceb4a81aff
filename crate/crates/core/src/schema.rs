//! Canonical record format: one (prompt, story) pair per line.
//!
//! A line is a JSON object with the fields `id`, `model`, `k`, `prompt`,
//! `story`, `tokens`, `sent_bounds`, `annos`, `trace`, plus the optional
//! prompt-side fields `prompt_tokens` and `prompt_annos`. Optional fields are
//! omitted when absent. `tokens` and `sent_bounds` may be omitted on input, in
//! which case they are derived from the story text with [`crate::textops`].

use std::borrow::Cow;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textops;
use crate::STORY_WORDS;

/// The 17 universal part-of-speech categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    pub const ALL: [Upos; 17] = [
        Upos::Adj,
        Upos::Adp,
        Upos::Adv,
        Upos::Aux,
        Upos::Cconj,
        Upos::Det,
        Upos::Intj,
        Upos::Noun,
        Upos::Num,
        Upos::Part,
        Upos::Pron,
        Upos::Propn,
        Upos::Punct,
        Upos::Sconj,
        Upos::Sym,
        Upos::Verb,
        Upos::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Adj => "ADJ",
            Upos::Adp => "ADP",
            Upos::Adv => "ADV",
            Upos::Aux => "AUX",
            Upos::Cconj => "CCONJ",
            Upos::Det => "DET",
            Upos::Intj => "INTJ",
            Upos::Noun => "NOUN",
            Upos::Num => "NUM",
            Upos::Part => "PART",
            Upos::Pron => "PRON",
            Upos::Propn => "PROPN",
            Upos::Punct => "PUNCT",
            Upos::Sconj => "SCONJ",
            Upos::Sym => "SYM",
            Upos::Verb => "VERB",
            Upos::X => "X",
        }
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    #[serde(rename = "t")]
    pub surface: String,
    pub lemma: String,
    pub pos: Upos,
    /// `"O"` or an IOB-prefixed type such as `"B-PERSON"`.
    pub ent: String,
}

impl AnnotatedToken {
    pub fn new(surface: impl Into<String>, lemma: impl Into<String>, pos: Upos, ent: impl Into<String>) -> Self {
        AnnotatedToken {
            surface: surface.into(),
            lemma: lemma.into(),
            pos,
            ent: ent.into(),
        }
    }
}

/// Per-subword natural-log probabilities aligned to word-level tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub sub_logp: Vec<f64>,
    pub word_ix: Vec<usize>,
    pub vocab_size: usize,
}

impl TokenTrace {
    /// Trace with exactly one subword per word.
    pub fn per_word(logps: Vec<f64>, vocab_size: usize) -> Self {
        let word_ix = (0..logps.len()).collect();
        TokenTrace {
            sub_logp: logps,
            word_ix,
            vocab_size,
        }
    }

    /// Log probability of each word, summing the subwords that compose it.
    /// Entry `w` is `None` when no subword maps to word `w`.
    pub fn word_logps(&self) -> Vec<Option<f64>> {
        let len = self.word_ix.iter().max().map_or(0, |&m| m + 1);
        let mut out = vec![None; len];
        for (&w, &lp) in self.word_ix.iter().zip(&self.sub_logp) {
            *out[w].get_or_insert(0.0) += lp;
        }
        out
    }

    /// Number of distinct words the trace covers.
    pub fn word_count(&self) -> usize {
        let mut count = 0;
        let mut last = None;
        for &w in &self.word_ix {
            if last != Some(w) {
                count += 1;
                last = Some(w);
            }
        }
        count
    }

    /// Keeps only subwords belonging to the first `words` words.
    pub fn truncate_words(&mut self, words: usize) {
        let keep = self.word_ix.iter().take_while(|&&w| w < words).count();
        self.sub_logp.truncate(keep);
        self.word_ix.truncate(keep);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawRecord")]
pub struct EvalRecord {
    pub id: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "prompt")]
    pub prompt_text: String,
    #[serde(rename = "story")]
    pub story_text: String,
    pub tokens: Vec<String>,
    /// Half-open `[start, end)` token ranges, one per sentence.
    pub sent_bounds: Vec<(usize, usize)>,
    #[serde(rename = "annos", skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<AnnotatedToken>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TokenTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_annos: Option<Vec<AnnotatedToken>>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    model: String,
    #[serde(default)]
    k: Option<usize>,
    prompt: String,
    story: String,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    sent_bounds: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    annos: Option<Vec<AnnotatedToken>>,
    #[serde(default)]
    trace: Option<TokenTrace>,
    #[serde(default)]
    prompt_tokens: Option<Vec<String>>,
    #[serde(default)]
    prompt_annos: Option<Vec<AnnotatedToken>>,
}

impl From<RawRecord> for EvalRecord {
    fn from(raw: RawRecord) -> Self {
        let tokens = raw
            .tokens
            .unwrap_or_else(|| textops::tokenize_words(&raw.story));
        let sent_bounds = raw
            .sent_bounds
            .unwrap_or_else(|| textops::split_sentences(&tokens));
        EvalRecord {
            id: raw.id,
            model: raw.model,
            k: raw.k,
            prompt_text: raw.prompt,
            story_text: raw.story,
            tokens,
            sent_bounds,
            annotations: raw.annos,
            trace: raw.trace,
            prompt_tokens: raw.prompt_tokens,
            prompt_annos: raw.prompt_annos,
        }
    }
}

/// A broken record invariant.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("sentence bounds do not cover tokens")]
    SentenceBounds,
    #[error("annotations length {annos} does not match tokens length {tokens}")]
    AnnotationLength { annos: usize, tokens: usize },
    #[error("prompt annotations length {annos} does not match prompt tokens length {tokens}")]
    PromptAnnotationLength { annos: usize, tokens: usize },
    #[error("entity label {label:?} at token {index} is neither \"O\" nor IOB-prefixed")]
    EntityLabel { index: usize, label: String },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds trace vocabulary size {vocab_size}")]
    KExceedsVocab { k: usize, vocab_size: usize },
    #[error("trace vocabulary size must be positive")]
    ZeroVocab,
    #[error("trace sub_logp has {sub_logp} entries but word_ix has {word_ix}")]
    TraceLength { sub_logp: usize, word_ix: usize },
    #[error("trace log probability {value} at {index} is not <= 0")]
    PositiveLogProb { index: usize, value: f64 },
    #[error("trace word index {value} at {index} is outside [0, {tokens})")]
    WordIndexRange { index: usize, value: usize, tokens: usize },
    #[error("trace word indices decrease at {index}")]
    WordIndexOrder { index: usize },
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record at `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: record {id:?}: {violation}")]
    Invalid {
        line: usize,
        id: String,
        violation: Violation,
    },
}

impl SchemaError {
    pub fn line(&self) -> Option<usize> {
        match self {
            SchemaError::Io { .. } => None,
            SchemaError::Malformed { line, .. } | SchemaError::Invalid { line, .. } => Some(*line),
        }
    }
}

fn valid_entity_label(label: &str) -> bool {
    if label == "O" {
        return true;
    }
    let bytes = label.as_bytes();
    bytes.len() > 2
        && matches!(bytes[0], b'B' | b'I')
        && bytes[1] == b'-'
        && bytes[2..].iter().all(|b| b.is_ascii_uppercase() || *b == b'_')
}

fn check_annotations(annos: &[AnnotatedToken]) -> Result<(), Violation> {
    for (index, a) in annos.iter().enumerate() {
        if !valid_entity_label(&a.ent) {
            return Err(Violation::EntityLabel {
                index,
                label: a.ent.clone(),
            });
        }
    }
    Ok(())
}

/// Checks that `bounds` are sorted, disjoint and exactly cover `0..len`.
pub fn bounds_partition(bounds: &[(usize, usize)], len: usize) -> bool {
    let mut next = 0;
    for &(start, end) in bounds {
        if start != next || end <= start {
            return false;
        }
        next = end;
    }
    next == len
}

impl EvalRecord {
    /// Minimal record: tokens and sentences derived from `story`.
    pub fn from_text(id: impl Into<String>, model: impl Into<String>, k: Option<usize>, prompt: &str, story: &str) -> Self {
        let tokens = textops::tokenize_words(story);
        let sent_bounds = textops::split_sentences(&tokens);
        EvalRecord {
            id: id.into(),
            model: model.into(),
            k,
            prompt_text: prompt.to_owned(),
            story_text: story.to_owned(),
            tokens,
            sent_bounds,
            annotations: None,
            trace: None,
            prompt_tokens: None,
            prompt_annos: None,
        }
    }

    pub fn validate(&self) -> Result<(), Violation> {
        if !bounds_partition(&self.sent_bounds, self.tokens.len()) {
            return Err(Violation::SentenceBounds);
        }
        if let Some(annos) = &self.annotations {
            if annos.len() != self.tokens.len() {
                return Err(Violation::AnnotationLength {
                    annos: annos.len(),
                    tokens: self.tokens.len(),
                });
            }
            check_annotations(annos)?;
        }
        if let Some(annos) = &self.prompt_annos {
            let tokens = self.prompt_tokens().len();
            if annos.len() != tokens {
                return Err(Violation::PromptAnnotationLength {
                    annos: annos.len(),
                    tokens,
                });
            }
            check_annotations(annos)?;
        }
        if self.k == Some(0) {
            return Err(Violation::ZeroK);
        }
        if let Some(trace) = &self.trace {
            if trace.vocab_size == 0 {
                return Err(Violation::ZeroVocab);
            }
            if let Some(k) = self.k {
                if k > trace.vocab_size {
                    return Err(Violation::KExceedsVocab {
                        k,
                        vocab_size: trace.vocab_size,
                    });
                }
            }
            if trace.sub_logp.len() != trace.word_ix.len() {
                return Err(Violation::TraceLength {
                    sub_logp: trace.sub_logp.len(),
                    word_ix: trace.word_ix.len(),
                });
            }
            for (index, &value) in trace.sub_logp.iter().enumerate() {
                // NaN fails this comparison too.
                if !(value <= 0.0) {
                    return Err(Violation::PositiveLogProb { index, value });
                }
            }
            let mut prev = 0;
            for (index, &value) in trace.word_ix.iter().enumerate() {
                if value >= self.tokens.len() {
                    return Err(Violation::WordIndexRange {
                        index,
                        value,
                        tokens: self.tokens.len(),
                    });
                }
                if value < prev {
                    return Err(Violation::WordIndexOrder { index });
                }
                prev = value;
            }
        }
        Ok(())
    }

    /// Prompt tokens, tokenizing the prompt text when none are stored.
    pub fn prompt_tokens(&self) -> Cow<'_, [String]> {
        match &self.prompt_tokens {
            Some(t) => Cow::Borrowed(t.as_slice()),
            None => Cow::Owned(textops::tokenize_words(&self.prompt_text)),
        }
    }

    pub fn sentences(&self) -> impl Iterator<Item = &[String]> + '_ {
        self.sent_bounds.iter().map(|&(s, e)| &self.tokens[s..e])
    }

    pub fn is_human(&self) -> bool {
        self.model == "human"
    }

    /// Cuts the story to its first `words` tokens. Sentence ranges are clipped
    /// rather than dropped, and the story text is rebuilt from the kept tokens.
    pub fn truncate(&mut self, words: usize) {
        if self.tokens.len() <= words {
            return;
        }
        self.tokens.truncate(words);
        self.sent_bounds.retain(|&(s, _)| s < words);
        if let Some(last) = self.sent_bounds.last_mut() {
            last.1 = last.1.min(words);
        }
        if let Some(annos) = &mut self.annotations {
            annos.truncate(words);
        }
        if let Some(trace) = &mut self.trace {
            trace.truncate_words(words);
        }
        self.story_text = self.tokens.join(" ");
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

/// Streaming reader over a line-delimited record file.
pub struct RecordReader<R> {
    lines: io::Lines<R>,
    line: usize,
    path: PathBuf,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Self {
        RecordReader {
            lines: reader.lines(),
            line: 0,
            path: path.into(),
        }
    }
}

/// Parses and validates one line. `line` is 1-based and only used in errors.
pub fn parse_line(text: &str, line: usize) -> Result<EvalRecord, SchemaError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let record: EvalRecord = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        SchemaError::Malformed {
            line,
            field,
            message: e.into_inner().to_string(),
        }
    })?;
    de.end().map_err(|e| SchemaError::Malformed {
        line,
        field: ".".into(),
        message: e.to_string(),
    })?;
    record.validate().map_err(|violation| SchemaError::Invalid {
        line,
        id: record.id.clone(),
        violation,
    })?;
    Ok(record)
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<EvalRecord, SchemaError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(source) => {
                    return Some(Err(SchemaError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_line(&text, self.line));
        }
    }
}

pub fn load_records(path: impl AsRef<Path>) -> Result<RecordReader<BufReader<File>>, SchemaError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| SchemaError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(RecordReader::new(BufReader::new(file), path))
}

/// Reads a whole file. With `skip_invalid`, bad lines are collected and
/// returned alongside the good records instead of aborting.
pub fn read_all(path: impl AsRef<Path>, skip_invalid: bool) -> Result<(Vec<EvalRecord>, Vec<SchemaError>), SchemaError> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for item in load_records(path)? {
        match item {
            Ok(r) => records.push(r),
            Err(e @ SchemaError::Io { .. }) => return Err(e),
            Err(e) if skip_invalid => {
                log::warn!("skipping {e}");
                rejected.push(e);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((records, rejected))
}

pub fn write_records<'a>(path: impl AsRef<Path>, records: impl IntoIterator<Item = &'a EvalRecord>) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    out.flush()
}

#[derive(Debug, Default)]
pub struct Baseline {
    pub records: Vec<EvalRecord>,
    /// Human stories shorter than the cut length.
    pub dropped_short: usize,
    /// Records whose model is not `"human"`.
    pub skipped_non_human: usize,
}

/// Human baseline: every human story cut to exactly [`STORY_WORDS`] tokens,
/// shorter ones discarded.
pub fn build_human_baseline(records: impl IntoIterator<Item = EvalRecord>) -> Baseline {
    let mut out = Baseline::default();
    for mut r in records {
        if !r.is_human() {
            out.skipped_non_human += 1;
            continue;
        }
        if r.tokens.len() < STORY_WORDS {
            out.dropped_short += 1;
            continue;
        }
        r.truncate(STORY_WORDS);
        out.records.push(r);
    }
    if out.dropped_short > 0 {
        log::info!("baseline: dropped {} stories shorter than {STORY_WORDS} words", out.dropped_short);
    }
    out
}
