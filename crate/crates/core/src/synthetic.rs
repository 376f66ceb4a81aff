//! Deterministic toy corpus and resources.
//!
//! Stories are drawn from a small template grammar over four topics. Every
//! word has one part-of-speech tag, names and two-word places are entities,
//! so the generated text can be annotated exactly by [`TagLexicon`]. The
//! matching embeddings, concreteness ratings, stopword list and unigram
//! table are derived from the same word lists.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::resources::{
    ConcretenessLexicon, EmbeddingTable, FloorMode, StopwordList, UnigramTable, CONCRETENESS_FILE, EMBEDDINGS_FILE,
    STOPWORDS_FILE, UNIGRAMS_FILE,
};
use crate::rng::Stream;
use crate::schema::{AnnotatedToken, EvalRecord, Upos};
use crate::textops::split_sentences;
use crate::{Error, Result};

pub const TAGS_FILE: &str = "tags.tsv";
pub const TRAIN_TOKENS: usize = 50_000;
const EMBEDDING_DIM: usize = 24;

struct Topic {
    nouns: &'static [&'static str],
    /// (past form, lemma)
    verbs: &'static [(&'static str, &'static str)],
    adjectives: &'static [&'static str],
    names: &'static [&'static str],
    places: &'static [[&'static str; 2]],
}

const TOPICS: [Topic; 4] = [
    Topic {
        nouns: &["ship", "sail", "wave", "harbor", "captain", "anchor", "storm", "island", "gull", "rope", "deck", "tide"],
        verbs: &[("sailed", "sail"), ("rowed", "row"), ("sank", "sink"), ("drifted", "drift"), ("steered", "steer"), ("anchored", "anchor"), ("swam", "swim"), ("fished", "fish")],
        adjectives: &["salty", "wet", "stormy", "blue", "calm", "deep"],
        names: &["Marina", "Finn", "Coral"],
        places: &[["Port", "Vale"], ["Gull", "Bay"]],
    },
    Topic {
        nouns: &["tree", "wolf", "river", "cabin", "fox", "moss", "branch", "owl", "path", "stone", "fire", "leaf"],
        verbs: &[("climbed", "climb"), ("hunted", "hunt"), ("wandered", "wander"), ("gathered", "gather"), ("burned", "burn"), ("followed", "follow"), ("hid", "hide"), ("carved", "carve")],
        adjectives: &["green", "dark", "quiet", "tall", "wild", "cold"],
        names: &["Rowan", "Hazel", "Bram"],
        places: &[["Elder", "Wood"], ["Fox", "Hollow"]],
    },
    Topic {
        nouns: &["street", "tower", "train", "market", "lamp", "car", "bridge", "crowd", "window", "office", "coin", "clock"],
        verbs: &[("crossed", "cross"), ("bought", "buy"), ("drove", "drive"), ("waited", "wait"), ("painted", "paint"), ("sold", "sell"), ("watched", "watch"), ("built", "build")],
        adjectives: &["busy", "loud", "bright", "old", "narrow", "grey"],
        names: &["Victor", "Ada", "Milo"],
        places: &[["New", "Carrow"], ["Iron", "Gate"]],
    },
    Topic {
        nouns: &["rocket", "star", "planet", "moon", "engine", "signal", "robot", "orbit", "comet", "helmet", "panel", "crater"],
        verbs: &[("launched", "launch"), ("orbited", "orbit"), ("scanned", "scan"), ("repaired", "repair"), ("landed", "land"), ("floated", "float"), ("signaled", "signal"), ("explored", "explore")],
        adjectives: &["silent", "distant", "metal", "frozen", "strange", "vast"],
        names: &["Nova", "Orion", "Vega"],
        places: &[["Red", "Reach"], ["Star", "Dock"]],
    },
];

const FUNCTION_WORDS: [(&str, Upos); 15] = [
    ("the", Upos::Det),
    ("a", Upos::Det),
    ("and", Upos::Cconj),
    ("to", Upos::Adp),
    ("in", Upos::Adp),
    ("with", Upos::Adp),
    ("was", Upos::Aux),
    ("very", Upos::Adv),
    ("slowly", Upos::Adv),
    ("he", Upos::Pron),
    ("she", Upos::Pron),
    ("they", Upos::Pron),
    (".", Upos::Punct),
    (",", Upos::Punct),
    ("!", Upos::Punct),
];

/// Picks from `items`, favouring early entries.
fn skewed<'a, T>(rng: &mut Stream, items: &'a [T]) -> &'a T {
    let u = rng.next_f64();
    &items[((u * u) * items.len() as f64) as usize]
}

struct Writer<'r> {
    rng: &'r mut Stream,
    topic: usize,
    /// Entities of the prompt, reused often in the story.
    cast: Vec<Vec<&'static str>>,
}

impl Writer<'_> {
    fn topic(&mut self) -> &'static Topic {
        // occasional drift into another topic
        if self.rng.next_f64() < 0.1 {
            &TOPICS[self.rng.below(TOPICS.len())]
        } else {
            &TOPICS[self.topic]
        }
    }

    fn noun(&mut self) -> &'static str {
        let t = self.topic();
        skewed(self.rng, t.nouns)
    }

    fn verb(&mut self) -> &'static str {
        let t = self.topic();
        skewed(self.rng, t.verbs).0
    }

    fn adj(&mut self) -> &'static str {
        let t = self.topic();
        skewed(self.rng, t.adjectives)
    }

    fn name(&mut self) -> Vec<&'static str> {
        let names: Vec<&Vec<&str>> = self.cast.iter().filter(|c| c.len() == 1).collect();
        if !names.is_empty() && self.rng.next_f64() < 0.6 {
            return names[self.rng.below(names.len())].clone();
        }
        let t = self.topic();
        vec![*skewed(self.rng, t.names)]
    }

    fn place(&mut self) -> Vec<&'static str> {
        let places: Vec<&Vec<&str>> = self.cast.iter().filter(|c| c.len() == 2).collect();
        if !places.is_empty() && self.rng.next_f64() < 0.6 {
            return places[self.rng.below(places.len())].clone();
        }
        let t = self.topic();
        skewed(self.rng, t.places).to_vec()
    }

    fn pron(&mut self) -> &'static str {
        ["he", "she", "they"][self.rng.below(3)]
    }

    fn sentence(&mut self, out: &mut Vec<&'static str>) {
        match self.rng.below(6) {
            0 => {
                out.extend(self.name());
                out.extend([self.verb(), "the", self.adj(), self.noun(), "."]);
            }
            1 => {
                out.extend(["the", self.noun(), self.verb(), "in"]);
                out.extend(self.place());
                out.push(".");
            }
            2 => {
                out.extend([self.pron(), self.verb(), "the", self.noun(), "and", "the", self.noun(), "."]);
            }
            3 => {
                out.extend(["the", self.adj(), self.noun(), "was", "very", self.adj(), "."]);
            }
            4 => {
                out.extend(self.name());
                out.push("and");
                out.extend(self.name());
                out.extend([self.verb(), "to", "the", self.noun(), ",", "slowly", "."]);
            }
            _ => {
                out.extend([self.pron(), self.verb(), "with", "a", self.noun(), "!"]);
            }
        }
    }
}

/// One prompt and a story of at least `min_story` tokens.
fn write_pair(rng: &mut Stream, min_story: usize) -> (Vec<&'static str>, Vec<&'static str>) {
    let topic = rng.below(TOPICS.len());
    let mut w = Writer {
        rng,
        topic,
        cast: Vec::new(),
    };
    let name = w.name();
    let place = w.place();
    let mut prompt = name.clone();
    prompt.extend([w.verb(), "a", w.adj(), w.noun(), "in"]);
    prompt.extend(place.iter().copied());
    prompt.push(".");
    w.cast = vec![name, place];
    let mut story = Vec::new();
    while story.len() < min_story {
        w.sentence(&mut story);
    }
    (prompt, story)
}

/// Word-to-tag table covering the synthetic vocabulary, with multi-word
/// entities matched greedily.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TagLexicon {
    words: BTreeMap<String, (String, Upos)>,
    /// Entity token sequences and their types.
    entities: Vec<(Vec<String>, String)>,
}

impl TagLexicon {
    pub fn synthetic() -> Self {
        let mut lex = TagLexicon::default();
        let mut add = |w: &str, lemma: &str, pos: Upos| {
            lex.words.insert(w.to_owned(), (lemma.to_owned(), pos));
        };
        for (w, pos) in FUNCTION_WORDS {
            add(w, if w == "was" { "be" } else { w }, pos);
        }
        for t in &TOPICS {
            for n in t.nouns {
                add(n, n, Upos::Noun);
            }
            for (v, l) in t.verbs {
                add(v, l, Upos::Verb);
            }
            for a in t.adjectives {
                add(a, a, Upos::Adj);
            }
            for n in t.names {
                add(n, n, Upos::Propn);
            }
            for p in t.places {
                for w in p {
                    add(w, w, Upos::Propn);
                }
            }
        }
        for t in &TOPICS {
            for n in t.names {
                lex.entities.push((vec![(*n).to_owned()], "PER".to_owned()));
            }
            for p in t.places {
                lex.entities.push((p.iter().map(|w| (*w).to_owned()).collect(), "LOC".to_owned()));
            }
        }
        // longest first so two-word places win over any one-word prefix
        lex.entities.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        lex
    }

    pub fn tag(&self, word: &str) -> Option<Upos> {
        self.words.get(word).map(|e| e.1)
    }

    pub fn annotate<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<AnnotatedToken> {
        let mut out: Vec<AnnotatedToken> = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                match self.words.get(t) {
                    Some((lemma, pos)) => AnnotatedToken::new(t, lemma.as_str(), *pos, "O"),
                    None => AnnotatedToken::new(t, t.to_lowercase(), Upos::X, "O"),
                }
            })
            .collect();
        let mut i = 0;
        while i < tokens.len() {
            let hit = self.entities.iter().find(|(seq, _)| {
                tokens.len() - i >= seq.len() && seq.iter().zip(&tokens[i..]).all(|(a, b)| a == b.as_ref())
            });
            match hit {
                Some((seq, kind)) => {
                    for (j, a) in out[i..i + seq.len()].iter_mut().enumerate() {
                        a.ent = format!("{}-{kind}", if j == 0 { "B" } else { "I" });
                    }
                    i += seq.len();
                }
                None => i += 1,
            }
        }
        out
    }

    /// Tab-separated lines: `word lemma POS`, then `#entity TYPE word...`.
    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut s = String::new();
        for (w, (lemma, pos)) in &self.words {
            s.push_str(&format!("{w}\t{lemma}\t{pos}\n"));
        }
        for (seq, kind) in &self.entities {
            s.push_str(&format!("#entity\t{kind}\t{}\n", seq.join("\t")));
        }
        fs::write(path, s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize| Error::ModelFormat(format!("{}:{}: malformed tag line", path.display(), line));
        let mut lex = TagLexicon::default();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols[0] == "#entity" {
                if cols.len() < 3 {
                    return Err(bad(i + 1));
                }
                lex.entities
                    .push((cols[2..].iter().map(|w| (*w).to_owned()).collect(), cols[1].to_owned()));
                continue;
            }
            let [w, lemma, pos] = cols[..] else {
                return Err(bad(i + 1));
            };
            let pos: Upos = serde_json::from_value(serde_json::Value::String(pos.to_owned())).map_err(|_| bad(i + 1))?;
            lex.words.insert(w.to_owned(), (lemma.to_owned(), pos));
        }
        lex.entities.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(lex)
    }
}

fn human_record(id: String, prompt: &[&str], story: &[&str], tagger: &TagLexicon) -> EvalRecord {
    let tokens: Vec<String> = story.iter().map(|s| (*s).to_owned()).collect();
    let prompt_tokens: Vec<String> = prompt.iter().map(|s| (*s).to_owned()).collect();
    EvalRecord {
        id,
        model: "human".to_owned(),
        k: None,
        prompt_text: prompt.join(" "),
        story_text: story.join(" "),
        sent_bounds: split_sentences(&tokens),
        annotations: Some(tagger.annotate(&tokens)),
        trace: None,
        prompt_annos: Some(tagger.annotate(&prompt_tokens)),
        prompt_tokens: Some(prompt_tokens),
        tokens,
    }
}

/// Training and held-out human records.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub train: Vec<EvalRecord>,
    pub test: Vec<EvalRecord>,
}

impl SyntheticCorpus {
    /// Training records until prompts plus stories reach `train_tokens`,
    /// then `n_test` held-out records whose stories have at least 160
    /// tokens.
    pub fn generate(seed: u64, train_tokens: usize, n_test: usize) -> Self {
        let tagger = TagLexicon::synthetic();
        let mut rng = Stream::new(seed);
        let mut train = Vec::new();
        let mut total = 0;
        while total < train_tokens {
            let min_story = 60 + rng_len(&mut rng);
            let (p, s) = write_pair(&mut rng, min_story);
            total += p.len() + s.len();
            train.push(human_record(format!("train-{:05}", train.len()), &p, &s, &tagger));
        }
        let test = (0..n_test)
            .map(|i| {
                let (p, s) = write_pair(&mut rng, 160);
                human_record(format!("test-{i:05}"), &p, &s, &tagger)
            })
            .collect();
        SyntheticCorpus { train, test }
    }

    pub fn train_tokens(&self) -> usize {
        self.train
            .iter()
            .map(|r| r.tokens.len() + r.prompt_tokens().len())
            .sum()
    }
}

fn rng_len(rng: &mut Stream) -> usize {
    rng.below(120)
}

/// Every word the grammar can emit.
pub fn vocabulary() -> Vec<&'static str> {
    let mut v: Vec<&str> = FUNCTION_WORDS.iter().map(|w| w.0).collect();
    for t in &TOPICS {
        v.extend(t.nouns);
        v.extend(t.verbs.iter().map(|p| p.0));
        v.extend(t.adjectives);
        v.extend(t.names);
        v.extend(t.places.iter().flatten());
    }
    v.sort_unstable();
    v.dedup();
    v
}

fn hash_seed(word: &str) -> u64 {
    word.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

fn gaussianish(rng: &mut Stream) -> f64 {
    // sum of uniforms, centred, unit variance
    (0..4).map(|_| rng.next_f64()).sum::<f64>() - 2.0
}

/// Topic-clustered vectors: a shared offset, a topic direction, a tag
/// direction and per-word noise.
pub fn embeddings() -> EmbeddingTable {
    let direction = |seed: u64| -> Vec<f64> {
        let mut rng = Stream::new(seed);
        (0..EMBEDDING_DIM).map(|_| gaussianish(&mut rng)).collect()
    };
    let common = direction(7);
    let topic_dirs: Vec<Vec<f64>> = (0..TOPICS.len() as u64).map(|t| direction(100 + t)).collect();
    let tagger = TagLexicon::synthetic();
    let mut table = EmbeddingTable::new(EMBEDDING_DIM);
    for w in vocabulary() {
        let topic = TOPICS.iter().position(|t| {
            t.nouns.contains(&w)
                || t.verbs.iter().any(|v| v.0 == w)
                || t.adjectives.contains(&w)
                || t.names.contains(&w)
                || t.places.iter().flatten().any(|p| *p == w)
        });
        let pos = tagger.tag(w).unwrap_or(Upos::X);
        let pos_dir = direction(200 + Upos::ALL.iter().position(|&p| p == pos).unwrap_or(0) as u64);
        let noise = direction(hash_seed(w));
        let v = (0..EMBEDDING_DIM)
            .map(|d| {
                let t = topic.map_or(0.0, |t| 1.2 * topic_dirs[t][d]);
                common[d] + t + 0.5 * pos_dir[d] + 0.4 * noise[d]
            })
            .collect();
        table.insert(w, v);
    }
    table
}

/// Nouns rate concrete, verbs and adjectives middling, function words
/// abstract. Ratings are rounded to two decimals.
pub fn concreteness() -> ConcretenessLexicon {
    let tagger = TagLexicon::synthetic();
    let mut pairs = Vec::new();
    for (lemma, pos) in tagger.words.values() {
        if matches!(pos, Upos::Punct | Upos::Propn) {
            continue;
        }
        let (lo, hi) = match pos {
            Upos::Noun => (3.5, 5.0),
            Upos::Verb => (1.8, 3.6),
            Upos::Adj => (2.0, 4.0),
            _ => (1.2, 2.4),
        };
        let u = Stream::new(hash_seed(lemma) ^ 0x5eed).next_f64();
        let r = ((lo + (hi - lo) * u) * 100.0).round() / 100.0;
        pairs.push((lemma.clone(), r));
    }
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    pairs.dedup_by(|a, b| a.0 == b.0);
    ConcretenessLexicon::from_pairs(pairs)
}

pub fn stopwords() -> StopwordList {
    StopwordList::new(
        FUNCTION_WORDS
            .iter()
            .filter(|(_, pos)| *pos != Upos::Punct)
            .map(|(w, _)| *w),
    )
}

pub fn unigrams(corpus: &SyntheticCorpus) -> Result<UnigramTable> {
    let tokens = corpus
        .train
        .iter()
        .flat_map(|r| r.prompt_tokens().into_owned().into_iter().chain(r.tokens.iter().cloned()));
    Ok(UnigramTable::build(tokens, FloorMode::AddOne)?)
}

/// Writes the four standard resource files plus the tag table into `dir`.
pub fn write_resources(dir: impl AsRef<Path>, corpus: &SyntheticCorpus) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(EMBEDDINGS_FILE);
    embeddings().save(&p).map_err(|e| Error::io(&p, e))?;
    let p = dir.join(UNIGRAMS_FILE);
    unigrams(corpus)?.save(&p).map_err(|e| Error::io(&p, e))?;
    concreteness().save(dir.join(CONCRETENESS_FILE))?;
    let p = dir.join(STOPWORDS_FILE);
    stopwords().save(&p).map_err(|e| Error::io(&p, e))?;
    let p = dir.join(TAGS_FILE);
    TagLexicon::synthetic().save(&p).map_err(|e| Error::io(&p, e))
}
