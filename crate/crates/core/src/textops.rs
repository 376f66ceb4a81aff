//! Fallback tokenization, sentence splitting and n-gram extraction.
//!
//! Tokenizer rule: split on whitespace, then peel punctuation characters off
//! both ends of each chunk, one token per character. Interior punctuation
//! (`don't`, `3:26`) stays attached.
//!
//! Splitter rule: a sentence ends after a run of terminal tokens (made only of
//! `.`, `!`, `?` or `…`) together with one closing quote or bracket right
//! after it, provided that quote or bracket was opened inside the sentence.
//! A trailing remainder forms the last sentence.

use std::collections::HashMap;
use std::hash::Hash;

use crate::{Error, Result};

pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{00AB}' | '\u{00BB}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
        )
}

pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lead = chunk.chars().take_while(|&c| is_punct(c)).count();
        if lead == chunk.chars().count() {
            out.extend(chunk.chars().map(String::from));
            continue;
        }
        let trail = chunk.chars().rev().take_while(|&c| is_punct(c)).count();
        let mut chars = chunk.chars();
        out.extend(chars.by_ref().take(lead).map(String::from));
        let core_len = chunk.chars().count() - lead - trail;
        out.push(chars.by_ref().take(core_len).collect());
        out.extend(chars.map(String::from));
    }
    out
}

fn is_terminal(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| matches!(c, '.' | '!' | '?' | '\u{2026}'))
}

/// Whether `tok` closes a quote or bracket opened inside `sentence`.
/// Straight quotes are ambiguous, so they only close when the sentence holds
/// an odd number of them.
fn closes(tok: &str, sentence: &[impl AsRef<str>]) -> bool {
    let count = |q: &str| sentence.iter().filter(|t| t.as_ref() == q).count();
    match tok {
        "\"" | "'" => count(tok) % 2 == 1,
        ")" => count("(") > count(")"),
        "''" | "\u{201D}" | "\u{2019}" => true,
        _ => false,
    }
}

/// Sentence ranges over `tokens`; always a partition of `0..tokens.len()`.
pub fn split_sentences<S: AsRef<str>>(tokens: &[S]) -> Vec<(usize, usize)> {
    let mut bounds = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        if is_terminal(tokens[i].as_ref()) {
            let mut end = i + 1;
            while end < tokens.len() && is_terminal(tokens[end].as_ref()) {
                end += 1;
            }
            if end < tokens.len() && closes(tokens[end].as_ref(), &tokens[start..end]) {
                end += 1;
            }
            bounds.push((start, end));
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < tokens.len() {
        bounds.push((start, tokens.len()));
    }
    bounds
}

/// Multiset of the contiguous n-grams of a sequence.
#[derive(Clone, Debug)]
pub struct NgramSet<'a, T> {
    pub order: usize,
    pub counts: HashMap<&'a [T], usize>,
    pub total: usize,
}

impl<'a, T: Eq + Hash> NgramSet<'a, T> {
    pub fn unique(&self) -> usize {
        self.counts.len()
    }

    pub fn contains(&self, gram: &[T]) -> bool {
        self.counts.contains_key(gram)
    }
}

pub fn extract_ngrams<T: Eq + Hash>(tokens: &[T], n: usize) -> Result<NgramSet<'_, T>> {
    if n < 1 {
        return Err(Error::InvalidOrder(n));
    }
    let mut counts = HashMap::new();
    let mut total = 0;
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
        total += 1;
    }
    Ok(NgramSet { order: n, counts, total })
}
