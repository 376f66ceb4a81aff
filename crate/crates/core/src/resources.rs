//! Read-only lexicons: word embeddings, unigram probabilities, concreteness
//! ratings and stopwords.
//!
//! File formats:
//!
//! - embeddings: `word v1 v2 ... vd` per line (an optional `count dim`
//!   header line is skipped),
//! - concreteness: CSV `lemma,rating` with a header row,
//! - stopwords: one word per line,
//! - unigrams: `#total N` header, then `word probability` per line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: file is empty", path.display())]
    Empty { path: PathBuf },
    #[error("{}:{line}: vector has {found} components, expected {expected}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{}:{line}: rating {rating} for {lemma:?} is outside [1, 5]", path.display())]
    RatingOutOfRange {
        path: PathBuf,
        line: usize,
        lemma: String,
        rating: f64,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cannot build a unigram table from an empty corpus")]
    EmptyCorpus,
}

fn read_text(path: &Path) -> Result<String, ResourceError> {
    let text = fs::read_to_string(path).map_err(|source| ResourceError::Io {
        path: path.to_owned(),
        source,
    })?;
    if text.trim().is_empty() {
        return Err(ResourceError::Empty { path: path.to_owned() });
    }
    Ok(text)
}

/// Hex SHA-256 of a file's bytes, used to fingerprint runs.
pub fn file_hash(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            entries: HashMap::new(),
        }
    }

    /// Panics if `vector` has the wrong dimension.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dimension, "embedding dimension mismatch");
        self.entries.insert(word.into(), vector);
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact lookup, falling back to the lowercased word.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries
            .get(word)
            .or_else(|| self.entries.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
                continue;
            }
            let vector = values
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ResourceError::Parse {
                    path: path.to_owned(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
            if vector.len() != table.dimension || vector.is_empty() {
                return Err(ResourceError::DimensionMismatch {
                    path: path.to_owned(),
                    line: line_no,
                    expected: table.dimension,
                    found: vector.len(),
                });
            }
            table.entries.insert(word.to_owned(), vector);
        }
        table.ok_or_else(|| ResourceError::Empty { path: path.to_owned() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let sorted: BTreeMap<_, _> = self.entries.iter().collect();
        for (word, v) in sorted {
            write!(out, "{word}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// How out-of-vocabulary words are priced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FloorMode {
    /// `1 / (N + 1)` for a corpus of `N` tokens.
    AddOne,
    Fixed(f64),
}

impl Default for FloorMode {
    fn default() -> Self {
        FloorMode::AddOne
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnigramTable {
    probs: HashMap<String, f64>,
    total_tokens: u64,
    floor_prob: f64,
}

impl UnigramTable {
    pub fn build<I, S>(corpus: I, floor: FloorMode) -> Result<Self, ResourceError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for tok in corpus {
            let tok = tok.as_ref();
            match counts.get_mut(tok) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(tok.to_owned(), 1);
                }
            }
            total += 1;
        }
        if total == 0 {
            return Err(ResourceError::EmptyCorpus);
        }
        let probs = counts
            .into_iter()
            .map(|(w, c)| (w, c as f64 / total as f64))
            .collect();
        Ok(UnigramTable {
            probs,
            total_tokens: total,
            floor_prob: floor_value(floor, total),
        })
    }

    pub fn prob(&self, word: &str) -> f64 {
        self.probs.get(word).copied().unwrap_or(self.floor_prob)
    }

    pub fn seen(&self, word: &str) -> Option<f64> {
        self.probs.get(word).copied()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn floor_prob(&self) -> f64 {
        self.floor_prob
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(w, &p)| (w.as_str(), p))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "#total {}", self.total_tokens)?;
        let sorted: BTreeMap<_, _> = self.probs.iter().collect();
        for (w, p) in sorted {
            writeln!(out, "{w} {p}")?;
        }
        out.flush()
    }

    pub fn load(path: impl AsRef<Path>, floor: FloorMode) -> Result<Self, ResourceError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let parse_err = |line: usize, message: String| ResourceError::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let total = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("#total ")
                .and_then(|n| n.trim().parse::<u64>().ok())
                .ok_or_else(|| parse_err(1, "expected `#total N` header".into()))?,
            None => return Err(ResourceError::Empty { path: path.to_owned() }),
        };
        let mut probs = HashMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (word, p) = line
                .rsplit_once(' ')
                .ok_or_else(|| parse_err(i + 1, "expected `word probability`".into()))?;
            let p: f64 = p.parse().map_err(|e: std::num::ParseFloatError| parse_err(i + 1, e.to_string()))?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(parse_err(i + 1, format!("probability {p} outside (0, 1]")));
            }
            probs.insert(word.to_owned(), p);
        }
        if total == 0 {
            return Err(ResourceError::EmptyCorpus);
        }
        Ok(UnigramTable {
            probs,
            total_tokens: total,
            floor_prob: floor_value(floor, total),
        })
    }
}

fn floor_value(mode: FloorMode, total: u64) -> f64 {
    match mode {
        FloorMode::AddOne => 1.0 / (total as f64 + 1.0),
        FloorMode::Fixed(p) => p,
    }
}

/// Concreteness ratings on a 1-5 scale, keyed by lowercase lemma.
#[derive(Clone, Debug, Default)]
pub struct ConcretenessLexicon {
    ratings: HashMap<String, f64>,
}

impl ConcretenessLexicon {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        ConcretenessLexicon {
            ratings: pairs
                .into_iter()
                .map(|(l, r)| (l.as_ref().to_lowercase(), r))
                .collect(),
        }
    }

    pub fn rating(&self, lemma: &str) -> Option<f64> {
        self.ratings.get(&lemma.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut ratings = HashMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| ResourceError::Parse {
                path: path.to_owned(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let (Some(lemma), Some(rating)) = (row.get(0), row.get(1)) else {
                return Err(ResourceError::Parse {
                    path: path.to_owned(),
                    line,
                    message: "expected `lemma,rating`".into(),
                });
            };
            let rating: f64 = rating.parse().map_err(|e: std::num::ParseFloatError| ResourceError::Parse {
                path: path.to_owned(),
                line,
                message: e.to_string(),
            })?;
            if !(1.0..=5.0).contains(&rating) {
                return Err(ResourceError::RatingOutOfRange {
                    path: path.to_owned(),
                    line,
                    lemma: lemma.to_owned(),
                    rating,
                });
            }
            ratings.insert(lemma.to_lowercase(), rating);
        }
        if ratings.is_empty() {
            return Err(ResourceError::Empty { path: path.to_owned() });
        }
        Ok(ConcretenessLexicon { ratings })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["lemma", "rating"])?;
        let sorted: BTreeMap<_, _> = self.ratings.iter().collect();
        for (lemma, rating) in sorted {
            w.write_record([lemma.as_str(), &rating.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordList {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    /// Lowercase-exact membership.
    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let text = read_text(path.as_ref())?;
        Ok(StopwordList::new(
            text.lines().map(str::trim).filter(|l| !l.is_empty()),
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut sorted: Vec<_> = self.words.iter().collect();
        sorted.sort();
        let mut out = BufWriter::new(File::create(path)?);
        for w in sorted {
            writeln!(out, "{w}")?;
        }
        out.flush()
    }
}

/// File names looked up inside a resource directory.
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const UNIGRAMS_FILE: &str = "unigrams.txt";
pub const CONCRETENESS_FILE: &str = "concreteness.csv";
pub const STOPWORDS_FILE: &str = "stopwords.txt";

/// Every lexicon the metrics draw on. Missing ones make the metrics that
/// need them come out absent.
#[derive(Clone, Debug, Default)]
pub struct LexiconSet {
    pub embeddings: Option<EmbeddingTable>,
    pub unigrams: Option<UnigramTable>,
    pub concreteness: Option<ConcretenessLexicon>,
    pub stopwords: Option<StopwordList>,
    /// File name to content hash, for run fingerprints.
    pub hashes: BTreeMap<String, String>,
}

impl LexiconSet {
    /// Loads whichever of the standard files exist in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let dir = dir.as_ref();
        let mut set = LexiconSet::default();
        let note = |name: &str, set: &mut LexiconSet| -> Result<Option<PathBuf>, ResourceError> {
            let p = dir.join(name);
            if !p.exists() {
                log::warn!("resource {} not found; dependent metrics will be absent", p.display());
                return Ok(None);
            }
            let hash = file_hash(&p).map_err(|source| ResourceError::Io { path: p.clone(), source })?;
            set.hashes.insert(name.to_owned(), hash);
            Ok(Some(p))
        };
        if let Some(p) = note(EMBEDDINGS_FILE, &mut set)? {
            set.embeddings = Some(EmbeddingTable::load(p)?);
        }
        if let Some(p) = note(UNIGRAMS_FILE, &mut set)? {
            set.unigrams = Some(UnigramTable::load(p, FloorMode::AddOne)?);
        }
        if let Some(p) = note(CONCRETENESS_FILE, &mut set)? {
            set.concreteness = Some(ConcretenessLexicon::load(p)?);
        }
        if let Some(p) = note(STOPWORDS_FILE, &mut set)? {
            set.stopwords = Some(StopwordList::load(p)?);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn unigram_formula() {
        let t = UnigramTable::build(["a", "a", "b", "c"], FloorMode::AddOne).unwrap();
        assert_eq!(t.prob("a"), 0.5);
        assert_eq!(t.prob("b"), 0.25);
        assert_eq!(t.prob("c"), 0.25);
        assert_eq!(t.prob("zzz"), 0.2);
        let single = UnigramTable::build(["a"], FloorMode::AddOne).unwrap();
        assert_eq!(single.prob("a"), 1.0);
        assert!(matches!(
            UnigramTable::build(Vec::<&str>::new(), FloorMode::AddOne),
            Err(ResourceError::EmptyCorpus)
        ));
    }

    #[test]
    fn unigram_matches_counting_script() {
        let mut s = crate::rng::Stream::new(5);
        let corpus: Vec<String> = (0..10_000).map(|_| format!("w{}", s.below(50).min(s.below(50)))).collect();
        let t = UnigramTable::build(&corpus, FloorMode::AddOne).unwrap();
        let mut sorted = corpus.clone();
        sorted.sort();
        let mut i = 0;
        let mut mass = 0.0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|w| **w == sorted[i]).count();
            let expected = j as f64 / 10_000.0;
            assert!((t.prob(&sorted[i]) - expected).abs() < 1e-12);
            mass += expected;
            i += j;
        }
        assert!((mass - 1.0).abs() < 1e-9);
        let sum: f64 = t.iter().map(|(_, p)| p).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unigram_persist_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = UnigramTable::build(["x", "y", "y", "z", "the"], FloorMode::AddOne).unwrap();
        let p = dir.path().join("u.txt");
        t.save(&p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("#total 5\n"));
        assert_eq!(UnigramTable::load(&p, FloorMode::AddOne).unwrap(), t);
    }

    #[test]
    fn embeddings_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.txt", "king 0.1 0.2 0.3\nqueen -1 0 2.5\n");
        let e = EmbeddingTable::load(&p).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.dimension(), 3);
        assert_eq!(e.get("queen"), Some(&[-1.0, 0.0, 2.5][..]));
        assert_eq!(e.get("Queen"), Some(&[-1.0, 0.0, 2.5][..]));
        assert_eq!(e.get("prince"), None);

        let p = write(&dir, "h.txt", "2 3\nking 0.1 0.2 0.3\nqueen -1 0 2.5\n");
        assert_eq!(EmbeddingTable::load(&p).unwrap().len(), 2);
    }

    #[test]
    fn embedding_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.txt", "a 1 2 3\nb 1 2\n");
        assert!(matches!(
            EmbeddingTable::load(&p),
            Err(ResourceError::DimensionMismatch { line: 2, expected: 3, found: 2, .. })
        ));
        let p = write(&dir, "empty.txt", "");
        assert!(matches!(EmbeddingTable::load(&p), Err(ResourceError::Empty { .. })));
        let p = write(&dir, "nan.txt", "a 1 x 3\n");
        assert!(matches!(EmbeddingTable::load(&p), Err(ResourceError::Parse { line: 1, .. })));
    }

    #[test]
    fn concreteness_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "lemma,rating\ntelevision,4.83\ndarkness,3.85\nidea,1.61\n");
        let c = ConcretenessLexicon::load(&p).unwrap();
        assert_eq!(c.rating("television"), Some(4.83));
        assert_eq!(c.rating("Idea"), Some(1.61));
        assert_eq!(c.rating("hope"), None);

        let p = write(&dir, "bad.csv", "lemma,rating\ntelevision,4.83\nfoo,7.2\n");
        assert!(matches!(
            ConcretenessLexicon::load(&p),
            Err(ResourceError::RatingOutOfRange { rating, line: 3, .. }) if rating == 7.2
        ));
        let p = write(&dir, "empty.csv", "");
        assert!(matches!(ConcretenessLexicon::load(&p), Err(ResourceError::Empty { .. })));
    }

    #[test]
    fn stopwords_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.txt", "the\nA\n\nof\n");
        let s = StopwordList::load(&p).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.contains("The"));
        assert!(s.contains("a"));
        let p = write(&dir, "e.txt", "\n\n");
        assert!(matches!(StopwordList::load(&p), Err(ResourceError::Empty { .. })));
    }
}
