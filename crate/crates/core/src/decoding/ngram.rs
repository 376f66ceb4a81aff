//! Interpolated absolute-discounting n-gram model.
//!
//! For a context `h` seen `c(h)` times with `T(h)` distinct followers,
//!
//! ```text
//! P(w | h) = max(c(h, w) - D, 0) / c(h) + D * T(h) / c(h) * P(w | h')
//! ```
//!
//! where `h'` drops the oldest token. Unseen contexts fall straight through
//! to `P(w | h')`. The unigram level interpolates the same way with the
//! uniform distribution over the vocabulary, so every token, `<unk>`
//! included, has nonzero probability.
//!
//! Binary layout (little endian): magic `NGLM`, format version `u32`, order
//! `u32`, discount `f64`, vocabulary length `u32` and each token as `u32`
//! byte length plus UTF-8 bytes, then for each context length `m` in
//! `0..order` an entry count `u64` followed by entries sorted by
//! (context ids, word id), each `m` context ids `u32`, word id `u32`, count
//! `u64`. The begin-of-sequence padding id equals the vocabulary length.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::scorer::{LmScorer, SequenceScorer};
use crate::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const DEFAULT_DISCOUNT: f64 = 0.75;

const MAGIC: &[u8; 4] = b"NGLM";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
struct ContextStats {
    total: u64,
    /// Sorted by word id.
    followers: Vec<(u32, u64)>,
}

impl ContextStats {
    fn count(&self, w: u32) -> u64 {
        self.followers
            .binary_search_by_key(&w, |&(id, _)| id)
            .map_or(0, |i| self.followers[i].1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel {
    order: usize,
    discount: f64,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `levels[m]` holds contexts of length `m`.
    levels: Vec<HashMap<Vec<u32>, ContextStats>>,
}

/// Trains on a set of token sequences. Each sequence is padded with
/// `order - 1` begin markers and closed with `</s>`.
pub fn train_ngram<S: AsRef<str>>(sequences: &[Vec<S>], order: usize) -> Result<NgramModel> {
    NgramModel::train(sequences, order, DEFAULT_DISCOUNT)
}

impl NgramModel {
    pub fn train<S: AsRef<str>>(sequences: &[Vec<S>], order: usize, discount: f64) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidOrder(order));
        }
        if sequences.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptyCorpus);
        }
        let mut words: BTreeSet<&str> = sequences.iter().flatten().map(AsRef::as_ref).collect();
        words.insert(EOS);
        words.insert(UNK);
        words.remove(BOS);
        let vocab: Vec<String> = words.into_iter().map(str::to_owned).collect();
        let index = build_index(&vocab);
        let bos = vocab.len() as u32;
        let eos = index[EOS];

        let mut raw: Vec<BTreeMap<Vec<u32>, BTreeMap<u32, u64>>> = vec![BTreeMap::new(); order];
        for seq in sequences {
            if seq.is_empty() {
                continue;
            }
            let mut ids = vec![bos; order - 1];
            ids.extend(seq.iter().map(|t| index[t.as_ref()]));
            ids.push(eos);
            for t in order - 1..ids.len() {
                for (m, level) in raw.iter_mut().enumerate() {
                    let ctx = ids[t - m..t].to_vec();
                    *level.entry(ctx).or_default().entry(ids[t]).or_default() += 1;
                }
            }
        }
        let levels = raw
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|(ctx, followers)| {
                        let followers: Vec<(u32, u64)> = followers.into_iter().collect();
                        let total = followers.iter().map(|f| f.1).sum();
                        (ctx, ContextStats { total, followers })
                    })
                    .collect()
            })
            .collect();
        Ok(NgramModel {
            order,
            discount,
            vocab,
            index,
            levels,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index
            .get(token)
            .copied()
            .unwrap_or_else(|| if token == BOS { self.bos() } else { self.index[UNK] })
    }

    fn bos(&self) -> u32 {
        self.vocab.len() as u32
    }

    /// The last `order - 1` ids of `history`, left-padded with the begin id.
    fn context_ids(&self, history: &[String]) -> Vec<u32> {
        let need = self.order - 1;
        let tail = &history[history.len().saturating_sub(need)..];
        let mut ctx = vec![self.bos(); need - tail.len()];
        ctx.extend(tail.iter().map(|t| self.id(t)));
        ctx
    }

    /// `P(w | ctx)` where `ctx` has exactly `order - 1` ids.
    pub fn prob_id(&self, w: u32, ctx: &[u32]) -> f64 {
        let mut p = 1.0 / self.vocab.len() as f64;
        for m in 0..self.order {
            let h = &ctx[ctx.len() - m..];
            if let Some(stats) = self.levels[m].get(h) {
                let total = stats.total as f64;
                let lambda = self.discount * stats.followers.len() as f64 / total;
                let c = stats.count(w) as f64;
                p = (c - self.discount).max(0.0) / total + lambda * p;
            }
        }
        p
    }

    fn dist_ids(&self, ctx: &[u32]) -> Vec<f64> {
        let mut p = vec![1.0 / self.vocab.len() as f64; self.vocab.len()];
        for m in 0..self.order {
            let h = &ctx[ctx.len() - m..];
            if let Some(stats) = self.levels[m].get(h) {
                let total = stats.total as f64;
                let lambda = self.discount * stats.followers.len() as f64 / total;
                p.iter_mut().for_each(|x| *x *= lambda);
                for &(w, c) in &stats.followers {
                    p[w as usize] += (c as f64 - self.discount).max(0.0) / total;
                }
            }
        }
        p
    }

    /// Every stored full-length context, for normalization checks.
    pub fn stored_contexts(&self) -> impl Iterator<Item = &[u32]> {
        self.levels[self.order - 1].keys().map(Vec::as_slice)
    }

    pub fn dist_for_ids(&self, ctx: &[u32]) -> Vec<f64> {
        assert_eq!(ctx.len(), self.order - 1);
        self.dist_ids(ctx)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        out.write_u32::<LittleEndian>(self.order as u32)?;
        out.write_f64::<LittleEndian>(self.discount)?;
        out.write_u32::<LittleEndian>(self.vocab.len() as u32)?;
        for tok in &self.vocab {
            out.write_u32::<LittleEndian>(tok.len() as u32)?;
            out.write_all(tok.as_bytes())?;
        }
        for level in &self.levels {
            let mut entries: Vec<(&Vec<u32>, u32, u64)> = level
                .iter()
                .flat_map(|(ctx, s)| s.followers.iter().map(move |&(w, c)| (ctx, w, c)))
                .collect();
            entries.sort_unstable();
            out.write_u64::<LittleEndian>(entries.len() as u64)?;
            for (ctx, w, c) in entries {
                for &id in ctx {
                    out.write_u32::<LittleEndian>(id)?;
                }
                out.write_u32::<LittleEndian>(w)?;
                out.write_u64::<LittleEndian>(c)?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_owned());
        let io = |e: std::io::Error| Error::ModelFormat(format!("truncated or unreadable: {e}"));
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not an n-gram model (bad magic)"));
        }
        let version = input.read_u32::<LittleEndian>().map_err(io)?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported format version {version}")));
        }
        let order = input.read_u32::<LittleEndian>().map_err(io)? as usize;
        if order == 0 {
            return Err(bad("order 0"));
        }
        let discount = input.read_f64::<LittleEndian>().map_err(io)?;
        let n_vocab = input.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut vocab = Vec::with_capacity(n_vocab);
        for _ in 0..n_vocab {
            let len = input.read_u32::<LittleEndian>().map_err(io)? as usize;
            let mut buf = vec![0u8; len];
            input.read_exact(&mut buf).map_err(io)?;
            vocab.push(String::from_utf8(buf).map_err(|_| bad("token is not UTF-8"))?);
        }
        let mut levels = Vec::with_capacity(order);
        for m in 0..order {
            let n = input.read_u64::<LittleEndian>().map_err(io)?;
            let mut level: HashMap<Vec<u32>, ContextStats> = HashMap::new();
            for _ in 0..n {
                let mut ctx = Vec::with_capacity(m);
                for _ in 0..m {
                    ctx.push(input.read_u32::<LittleEndian>().map_err(io)?);
                }
                let w = input.read_u32::<LittleEndian>().map_err(io)?;
                let c = input.read_u64::<LittleEndian>().map_err(io)?;
                if w as usize >= n_vocab || ctx.iter().any(|&id| id as usize > n_vocab) {
                    return Err(bad("id out of range"));
                }
                let stats = level.entry(ctx).or_default();
                stats.total += c;
                stats.followers.push((w, c));
            }
            levels.push(level);
        }
        let index = build_index(&vocab);
        if !index.contains_key(EOS) || !index.contains_key(UNK) {
            return Err(bad("vocabulary lacks </s> or <unk>"));
        }
        Ok(NgramModel {
            order,
            discount,
            vocab,
            index,
            levels,
        })
    }
}

fn build_index(vocab: &[String]) -> HashMap<String, u32> {
    vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect()
}

impl SequenceScorer for NgramModel {
    fn score_sequence(&self, context: &[String], target: &[String]) -> f64 {
        let need = self.order - 1;
        let mut ids: Vec<u32> = vec![self.bos(); need];
        ids.extend(context.iter().map(|t| self.id(t)));
        let mut total = 0.0;
        for tok in target {
            let w = self.id(tok);
            total += self.prob_id(w, &ids[ids.len() - need..]).ln();
            ids.push(w);
        }
        total
    }
}

impl LmScorer for NgramModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn token(&self, id: usize) -> &str {
        &self.vocab[id]
    }

    fn next_dist(&self, context: &[String]) -> Vec<f64> {
        self.dist_ids(&self.context_ids(context))
    }

    fn end_of_text(&self) -> Option<usize> {
        Some(self.index[EOS] as usize)
    }
}
