//! Model probes: prompt ranking, adjacent-sentence swaps, confidence over
//! time, and word-level perplexity.
//!
//! Ranking and swap probes take either a live [`SequenceScorer`] or a
//! [`ScoreTable`] of precomputed candidate scores keyed as
//! `<record_id>#orig`, `<record_id>#swap<i>` (i = 1..14) and
//! `<record_id>#prompt<j>` (j = index of the prompt's record in the
//! evaluation set).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::schema::{EvalRecord, TokenTrace};
use crate::scorer::SequenceScorer;
use crate::{Error, Result};

pub const DISTRACTORS: usize = 9;
pub const SWAP_SENTENCES: usize = 15;
pub const SWAP_POSITIONS: usize = SWAP_SENTENCES - 1;

/// How a corrupted or distractor score equal to the reference is judged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Ties count against the model.
    #[default]
    Strict,
    /// Ties count in the model's favour.
    Lenient,
}

impl std::str::FromStr for TiePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "strict" => Ok(TiePolicy::Strict),
            "lenient" => Ok(TiePolicy::Lenient),
            other => Err(format!("unknown tie policy `{other}` (expected strict or lenient)")),
        }
    }
}

impl TiePolicy {
    /// Whether `reference` beats `rival` under this policy.
    fn beats(self, reference: f64, rival: f64) -> bool {
        match self {
            TiePolicy::Strict => reference > rival,
            TiePolicy::Lenient => reference >= rival,
        }
    }
}

pub fn key_orig(id: &str) -> String {
    format!("{id}#orig")
}

pub fn key_swap(id: &str, position: usize) -> String {
    format!("{id}#swap{position}")
}

pub fn key_prompt(id: &str, prompt_index: usize) -> String {
    format!("{id}#prompt{prompt_index}")
}

/// Precomputed candidate scores.
#[derive(Clone, Debug, Default)]
pub struct ScoreTable {
    scores: HashMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    key: String,
    score: f64,
}

impl ScoreTable {
    pub fn insert(&mut self, key: String, score: f64) {
        self.scores.insert(key, score);
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.scores
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingScore(key.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Reads `{"key": ..., "score": ...}` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = ScoreTable::default();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScoreLine = serde_json::from_str(&line)?;
            table.insert(entry.key, entry.score);
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut keys: Vec<_> = self.scores.iter().collect();
        keys.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (key, &score) in keys {
            let line = serde_json::to_string(&ScoreLine { key: key.clone(), score })?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// For every story `i`, its true prompt index `i` followed by nine distinct
/// distractor indices drawn from stream `seed ^ i`.
pub fn ranking_plan(n_prompts: usize, n_stories: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_prompts < DISTRACTORS + 1 {
        return Err(Error::TooFewPrompts {
            needed: DISTRACTORS + 1,
            got: n_prompts,
        });
    }
    Ok((0..n_stories)
        .map(|i| {
            let mut rng = Stream::derive(seed, i as u64);
            let mut plan = vec![i];
            plan.extend(rng.sample_distinct(n_prompts, DISTRACTORS, Some(i)));
            plan
        })
        .collect())
}

/// Success iff the true-prompt score beats every distractor score.
pub fn ranking_success(true_score: f64, distractors: &[f64], ties: TiePolicy) -> bool {
    distractors.iter().all(|&d| ties.beats(true_score, d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub accuracy: f64,
    pub n: usize,
}

fn ranking_from(successes: impl Iterator<Item = bool>) -> RankingResult {
    let (hits, n) = successes.fold((0usize, 0usize), |(h, n), s| (h + s as usize, n + 1));
    RankingResult {
        accuracy: if n > 0 { hits as f64 / n as f64 } else { 0.0 },
        n,
    }
}

/// Story `i` is scored under `prompts[i]` and nine distractor prompts.
pub fn prompt_ranking_accuracy<S: SequenceScorer>(
    scorer: &S,
    stories: &[Vec<String>],
    prompts: &[Vec<String>],
    seed: u64,
    ties: TiePolicy,
) -> Result<RankingResult> {
    assert!(prompts.len() >= stories.len(), "every story needs its own prompt");
    let plan = ranking_plan(prompts.len(), stories.len(), seed)?;
    let successes: Vec<bool> = plan
        .par_iter()
        .zip(stories.par_iter())
        .map(|(cands, story)| {
            let scores: Vec<f64> = cands
                .iter()
                .map(|&j| scorer.score_sequence(&prompts[j], story))
                .collect();
            ranking_success(scores[0], &scores[1..], ties)
        })
        .collect();
    Ok(ranking_from(successes.into_iter()))
}

/// Ranking over stored scores; `ids[i]` names story `i` and prompt `i`.
pub fn prompt_ranking_from_scores(ids: &[String], table: &ScoreTable, seed: u64, ties: TiePolicy) -> Result<RankingResult> {
    let plan = ranking_plan(ids.len(), ids.len(), seed)?;
    let mut successes = Vec::with_capacity(ids.len());
    for (id, cands) in ids.iter().zip(&plan) {
        let scores = cands
            .iter()
            .map(|&j| table.get(&key_prompt(id, j)))
            .collect::<Result<Vec<f64>>>()?;
        successes.push(ranking_success(scores[0], &scores[1..], ties));
    }
    Ok(ranking_from(successes.into_iter()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwapCandidates {
    pub original: Vec<String>,
    /// Entry `i - 1` swaps sentences `i` and `i + 1` (1-based).
    pub corrupted: Vec<Vec<String>>,
}

/// The first 15 sentences and their 14 adjacent-swap corruptions; `None`
/// when the story has fewer than 15 sentences.
pub fn swap_candidates(record: &EvalRecord) -> Option<SwapCandidates> {
    let sentences: Vec<&[String]> = record.sentences().take(SWAP_SENTENCES).collect();
    if sentences.len() < SWAP_SENTENCES {
        return None;
    }
    let original = sentences.concat();
    let corrupted = (0..SWAP_POSITIONS)
        .map(|i| {
            let mut order = sentences.clone();
            order.swap(i, i + 1);
            order.concat()
        })
        .collect();
    Some(SwapCandidates { original, corrupted })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwapOutcome {
    pub error: bool,
    /// Rank of each swap position among the corrupted candidates; 1 is the
    /// most probable, ties go to the earlier position.
    pub ranks: Vec<usize>,
}

pub fn swap_outcome(original: f64, corrupted: &[f64], ties: TiePolicy) -> SwapOutcome {
    let error = corrupted.iter().any(|&c| !ties.beats(original, c));
    let mut order: Vec<usize> = (0..corrupted.len()).collect();
    order.sort_by(|&a, &b| corrupted[b].total_cmp(&corrupted[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; corrupted.len()];
    for (rank, &pos) in order.iter().enumerate() {
        ranks[pos] = rank + 1;
    }
    SwapOutcome { error, ranks }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapResult {
    pub error_rate: f64,
    /// Mean rank per swap position 1..14.
    pub mean_rank: Vec<f64>,
    pub n_scored: usize,
    pub n_skipped: usize,
}

fn fold_swaps(outcomes: Vec<SwapOutcome>, n_skipped: usize) -> Result<SwapResult> {
    if outcomes.is_empty() {
        return Err(Error::NothingToScore("no record has 15 sentences"));
    }
    let n = outcomes.len() as f64;
    let mut mean_rank = vec![0.0; SWAP_POSITIONS];
    let mut errors = 0usize;
    for o in &outcomes {
        errors += o.error as usize;
        for (m, &r) in mean_rank.iter_mut().zip(&o.ranks) {
            *m += r as f64;
        }
    }
    mean_rank.iter_mut().for_each(|m| *m /= n);
    Ok(SwapResult {
        error_rate: errors as f64 / n,
        mean_rank,
        n_scored: outcomes.len(),
        n_skipped,
    })
}

/// Scores each record's original and corrupted stories conditioned on its
/// prompt.
pub fn swap_probe<S: SequenceScorer>(scorer: &S, records: &[EvalRecord], ties: TiePolicy) -> Result<SwapResult> {
    let per_record: Vec<Option<SwapOutcome>> = records
        .par_iter()
        .map(|r| {
            let cands = swap_candidates(r)?;
            let prompt = r.prompt_tokens();
            let original = scorer.score_sequence(&prompt, &cands.original);
            let corrupted: Vec<f64> = cands
                .corrupted
                .iter()
                .map(|c| scorer.score_sequence(&prompt, c))
                .collect();
            Some(swap_outcome(original, &corrupted, ties))
        })
        .collect();
    let skipped = per_record.iter().filter(|o| o.is_none()).count();
    fold_swaps(per_record.into_iter().flatten().collect(), skipped)
}

/// Swap probe over stored scores. Records with fewer than 15 sentences are
/// skipped without looking up their keys.
pub fn swap_probe_from_scores(records: &[EvalRecord], table: &ScoreTable, ties: TiePolicy) -> Result<SwapResult> {
    let mut outcomes = Vec::new();
    let mut skipped = 0;
    for r in records {
        if r.sent_bounds.len() < SWAP_SENTENCES {
            skipped += 1;
            continue;
        }
        let original = table.get(&key_orig(&r.id))?;
        let corrupted = (1..=SWAP_POSITIONS)
            .map(|i| table.get(&key_swap(&r.id, i)))
            .collect::<Result<Vec<f64>>>()?;
        outcomes.push(swap_outcome(original, &corrupted, ties));
    }
    fold_swaps(outcomes, skipped)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCurve {
    /// Mean word probability at positions 1..=horizon.
    pub values: Vec<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Mean probability of each of the first `horizon` words, where a word's
/// probability is the product of its subword probabilities. Traces missing
/// any of those words are excluded.
pub fn confidence_curve<'a>(traces: impl IntoIterator<Item = &'a TokenTrace>, horizon: usize) -> Result<ConfidenceCurve> {
    let mut sums = vec![0.0; horizon];
    let mut used = 0;
    let mut excluded = 0;
    for trace in traces {
        let words = trace.word_logps();
        if words.len() < horizon || words[..horizon].iter().any(Option::is_none) {
            excluded += 1;
            continue;
        }
        for (s, lp) in sums.iter_mut().zip(&words[..horizon]) {
            *s += lp.expect("checked above").exp();
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoQualifyingTraces { horizon });
    }
    Ok(ConfidenceCurve {
        values: sums.into_iter().map(|s| s / used as f64).collect(),
        n_used: used,
        n_excluded: excluded,
    })
}

/// Total log probability of the story.
pub fn story_logprob(trace: &TokenTrace) -> Result<f64> {
    if trace.sub_logp.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(trace.sub_logp.iter().sum())
}

/// `exp(-total log prob / total word count)` pooled over all traces.
pub fn word_perplexity<'a>(traces: impl IntoIterator<Item = &'a TokenTrace>) -> Result<f64> {
    let mut nll = 0.0;
    let mut words = 0usize;
    for t in traces {
        nll -= story_logprob(t)?;
        words += t.word_count();
    }
    if words == 0 {
        return Err(Error::EmptyTrace);
    }
    Ok((nll / words as f64).exp())
}

/// Scores `target` one word at a time after `context`, producing a
/// one-subword-per-word trace.
pub fn teacher_force<S: SequenceScorer>(scorer: &S, context: &[String], target: &[String], vocab_size: usize) -> TokenTrace {
    let mut history = context.to_vec();
    let mut logps = Vec::with_capacity(target.len());
    for tok in target {
        logps.push(scorer.score_sequence(&history, std::slice::from_ref(tok)));
        history.push(tok.clone());
    }
    TokenTrace::per_word(logps, vocab_size)
}

/// Every probe quantity for one scorer or trace set; unset fields were not run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_ranking: Option<RankingResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swap: Option<SwapResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<ConfidenceCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub story_logprob_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_perplexity: Option<f64>,
}
