//! Bag-of-n-gram featurization.
//!
//! Word n-grams are built from Unicode-whitespace tokens with punctuation
//! trimmed from both ends and joined by a single space. Character n-grams run
//! over the (optionally lowercased) text as-is, spaces and punctuation
//! included.
//!
//! Character vocabularies are indexed with a trie keyed by `(node, char)`, so
//! vectorizing a comment walks at most `n_max` steps per position and never
//! materializes the n-gram strings.

use std::fs;
use std::io;
use std::path::Path;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const VOCAB_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgramKind {
    Word,
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Count,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub ngram_kind: NgramKind,
    pub n_min: usize,
    pub n_max: usize,
    pub max_features: usize,
    pub weighting: Weighting,
    pub lowercase: bool,
    /// Scale each vector to unit L2 norm.
    #[serde(default)]
    pub normalize: bool,
}

impl FeatureSpec {
    /// Word uni- and bigrams.
    pub fn word() -> Self {
        FeatureSpec {
            ngram_kind: NgramKind::Word,
            n_min: 1,
            n_max: 2,
            max_features: 10_000,
            weighting: Weighting::Count,
            lowercase: true,
            normalize: false,
        }
    }

    /// Character 1- to 5-grams.
    pub fn char() -> Self {
        FeatureSpec {
            ngram_kind: NgramKind::Char,
            n_max: 5,
            ..Self::word()
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(FeatureError::InvalidSpec(format!(
                "n-gram range {}..={} is empty or starts at 0",
                self.n_min, self.n_max
            )));
        }
        if self.max_features == 0 {
            return Err(FeatureError::InvalidSpec("max_features must be positive".into()));
        }
        Ok(())
    }

    fn counting_key(&self) -> (NgramKind, usize, usize, bool) {
        (self.ngram_kind, self.n_min, self.n_max, self.lowercase)
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary file: {0}")]
    Io(#[from] io::Error),
    #[error("vocabulary file is malformed: {0}")]
    Format(#[from] serde_json::Error),
    #[error("vocabulary file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("spec mismatch: {0}")]
    Mismatch(String),
}

/// Sparse non-negative feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn new(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Self {
        assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().is_none_or(|&i| (i as usize) < dim));
        SparseVector { dim, indices, values }
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            ..Default::default()
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        SparseVector::new(dense.len(), indices, values)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }
}

fn lowered(text: &str, lowercase: bool) -> std::borrow::Cow<'_, str> {
    if lowercase {
        std::borrow::Cow::Owned(text.to_lowercase())
    } else {
        std::borrow::Cow::Borrowed(text)
    }
}

/// Word tokens: whitespace split, punctuation trimmed from token edges.
pub fn word_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
}

/// Call `f` on every n-gram of `text` in the configured range.
fn for_each_ngram(text: &str, kind: NgramKind, n_min: usize, n_max: usize, mut f: impl FnMut(&str)) {
    match kind {
        NgramKind::Char => {
            let bounds: Vec<usize> = text
                .char_indices()
                .map(|(i, _)| i)
                .chain(std::iter::once(text.len()))
                .collect();
            let n_chars = bounds.len() - 1;
            for start in 0..n_chars {
                for n in n_min..=n_max.min(n_chars - start) {
                    f(&text[bounds[start]..bounds[start + n]]);
                }
            }
        }
        NgramKind::Word => {
            let tokens: Vec<&str> = word_tokens(text).collect();
            let mut buf = String::new();
            for start in 0..tokens.len() {
                for n in n_min..=n_max.min(tokens.len() - start) {
                    buf.clear();
                    for (k, t) in tokens[start..start + n].iter().enumerate() {
                        if k > 0 {
                            buf.push(' ');
                        }
                        buf.push_str(t);
                    }
                    f(&buf);
                }
            }
        }
    }
}

/// Corpus n-gram frequencies, reusable across vocabulary sizes.
#[derive(Debug, Clone)]
pub struct NgramCounts {
    key: (NgramKind, usize, usize, bool),
    counts: FxHashMap<String, u64>,
    built_from: String,
}

impl NgramCounts {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, gram: &str) -> u64 {
        self.counts.get(gram).copied().unwrap_or(0)
    }
}

/// SHA-256 over the texts, length-prefixed.
pub fn corpus_fingerprint<S: AsRef<str>>(texts: &[S]) -> String {
    let mut h = Sha256::new();
    for t in texts {
        let t = t.as_ref();
        h.update((t.len() as u64).to_le_bytes());
        h.update(t.as_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn count_ngrams<S: AsRef<str>>(texts: &[S], spec: &FeatureSpec) -> Result<NgramCounts, FeatureError> {
    spec.validate()?;
    if texts.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut counts: FxHashMap<String, u64> = FxHashMap::default();
    for t in texts {
        let text = lowered(t.as_ref(), spec.lowercase);
        for_each_ngram(&text, spec.ngram_kind, spec.n_min, spec.n_max, |g| {
            if let Some(c) = counts.get_mut(g) {
                *c += 1;
            } else {
                counts.insert(g.to_string(), 1);
            }
        });
    }
    Ok(NgramCounts {
        key: spec.counting_key(),
        counts,
        built_from: corpus_fingerprint(texts),
    })
}

#[derive(Debug, Clone, Default)]
struct CharTrie {
    edges: FxHashMap<(u32, char), u32>,
    column: Vec<u32>,
}

const NO_COLUMN: u32 = u32::MAX;

impl CharTrie {
    fn build(ngrams: &[String]) -> Self {
        let mut trie = CharTrie {
            edges: FxHashMap::default(),
            column: vec![NO_COLUMN],
        };
        for (col, g) in ngrams.iter().enumerate() {
            let mut node = 0u32;
            for c in g.chars() {
                let next_id = trie.column.len() as u32;
                node = *trie.edges.entry((node, c)).or_insert_with(|| next_id);
                if node == next_id {
                    trie.column.push(NO_COLUMN);
                }
            }
            trie.column[node as usize] = col as u32;
        }
        trie
    }
}

#[derive(Debug, Clone)]
enum Index {
    Char(CharTrie),
    Word(FxHashMap<String, u32>),
}

/// Mapping from n-gram to column, columns in lexicographic n-gram order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    spec: FeatureSpec,
    built_from: String,
    ngrams: Vec<String>,
    index: Index,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    spec: FeatureSpec,
    built_from: String,
    ngrams: Vec<String>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.built_from == other.built_from && self.ngrams == other.ngrams
    }
}

/// Top `max_features` n-grams by corpus frequency, ties broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], spec: &FeatureSpec) -> Result<Vocabulary, FeatureError> {
    Vocabulary::from_counts(&count_ngrams(texts, spec)?, spec)
}

impl Vocabulary {
    pub fn from_counts(counts: &NgramCounts, spec: &FeatureSpec) -> Result<Self, FeatureError> {
        spec.validate()?;
        if counts.key != spec.counting_key() {
            return Err(FeatureError::Mismatch(
                "n-gram counts were collected with a different kind, range or casing".into(),
            ));
        }
        if counts.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, u64)> = counts.counts.iter().map(|(g, c)| (g.as_str(), *c)).collect();
        let by_rank = |a: &(&str, u64), b: &(&str, u64)| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0));
        if ranked.len() > spec.max_features {
            ranked.select_nth_unstable_by(spec.max_features - 1, by_rank);
            ranked.truncate(spec.max_features);
        }
        let mut ngrams: Vec<String> = ranked.into_iter().map(|(g, _)| g.to_string()).collect();
        ngrams.sort_unstable();
        Ok(Self::from_parts(*spec, counts.built_from.clone(), ngrams))
    }

    fn from_parts(spec: FeatureSpec, built_from: String, ngrams: Vec<String>) -> Self {
        let index = match spec.ngram_kind {
            NgramKind::Char => Index::Char(CharTrie::build(&ngrams)),
            NgramKind::Word => Index::Word(
                ngrams
                    .iter()
                    .enumerate()
                    .map(|(i, g)| (g.clone(), i as u32))
                    .collect(),
            ),
        };
        Vocabulary {
            spec,
            built_from,
            ngrams,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn ngrams(&self) -> &[String] {
        &self.ngrams
    }

    pub fn built_from(&self) -> &str {
        &self.built_from
    }

    pub fn column(&self, gram: &str) -> Option<usize> {
        self.ngrams.binary_search_by(|g| g.as_str().cmp(gram)).ok()
    }

    /// Same vocabulary with a different weighting / normalization.
    pub fn with_weighting(&self, weighting: Weighting, normalize: bool) -> Self {
        let mut v = self.clone();
        v.spec.weighting = weighting;
        v.spec.normalize = normalize;
        v
    }

    /// SHA-256 of the serialized vocabulary.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_json().as_bytes());
        hex(&h.finalize())
    }

    pub fn vectorize(&self, text: &str) -> SparseVector {
        let text = lowered(text, self.spec.lowercase);
        let mut cols: Vec<u32> = Vec::new();
        match &self.index {
            Index::Char(trie) => {
                let chars: Vec<char> = text.chars().collect();
                for start in 0..chars.len() {
                    let mut node = 0u32;
                    for (depth, c) in chars[start..].iter().take(self.spec.n_max).enumerate() {
                        match trie.edges.get(&(node, *c)) {
                            Some(&next) => node = next,
                            None => break,
                        }
                        let col = trie.column[node as usize];
                        if depth + 1 >= self.spec.n_min && col != NO_COLUMN {
                            cols.push(col);
                        }
                    }
                }
            }
            Index::Word(map) => {
                for_each_ngram(&text, NgramKind::Word, self.spec.n_min, self.spec.n_max, |g| {
                    if let Some(&c) = map.get(g) {
                        cols.push(c);
                    }
                });
            }
        }
        cols.sort_unstable();
        let mut indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for c in cols {
            if indices.last() == Some(&c) {
                *values.last_mut().unwrap() += 1.0;
            } else {
                indices.push(c);
                values.push(1.0);
            }
        }
        if self.spec.weighting == Weighting::Binary {
            values.iter_mut().for_each(|v| *v = 1.0);
        }
        if self.spec.normalize {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                values.iter_mut().for_each(|v| *v /= norm);
            }
        }
        SparseVector::new(self.len(), indices, values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&VocabFile {
            version: VOCAB_VERSION,
            spec: self.spec,
            built_from: self.built_from.clone(),
            ngrams: self.ngrams.clone(),
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, FeatureError> {
        let file: serde_json::Value = serde_json::from_str(json)?;
        let version = file.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != VOCAB_VERSION {
            return Err(FeatureError::Version {
                found: version,
                expected: VOCAB_VERSION,
            });
        }
        let file: VocabFile = serde_json::from_value(file)?;
        file.spec.validate()?;
        if file.ngrams.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FeatureError::Mismatch("n-grams are not strictly sorted".into()));
        }
        Ok(Self::from_parts(file.spec, file.built_from, file.ngrams))
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(kind: NgramKind, n_min: usize, n_max: usize, max_features: usize) -> FeatureSpec {
        FeatureSpec {
            ngram_kind: kind,
            n_min,
            n_max,
            max_features,
            weighting: Weighting::Count,
            lowercase: true,
            normalize: false,
        }
    }

    #[test]
    fn char_vocab_enumeration() {
        let v = build_vocab(&["ab"], &spec(NgramKind::Char, 1, 2, 100)).unwrap();
        assert_eq!(v.ngrams(), &["a", "ab", "b"]);
    }

    #[test]
    fn max_features_keeps_most_frequent() {
        // "ab": a=1, b=1, ab=1 -> all tie, lexicographic: a, ab
        let v = build_vocab(&["ab"], &spec(NgramKind::Char, 1, 2, 2)).unwrap();
        assert_eq!(v.ngrams(), &["a", "ab"]);
        // "abb": b=2 beats a=1, ab=1, bb=1
        let v = build_vocab(&["abb"], &spec(NgramKind::Char, 1, 2, 2)).unwrap();
        assert_eq!(v.ngrams(), &["a", "b"]);
    }

    #[test]
    fn word_vocab_enumeration() {
        let v = build_vocab(&["good faith edit"], &spec(NgramKind::Word, 1, 2, 100)).unwrap();
        let mut want = vec!["good", "faith", "edit", "good faith", "faith edit"];
        want.sort();
        assert_eq!(v.ngrams(), want.as_slice());
    }

    #[test]
    fn word_tokens_trim_punctuation() {
        let toks: Vec<_> = word_tokens("Hello, WORLD!! (really) -- ok").collect();
        assert_eq!(toks, vec!["Hello", "WORLD", "really", "ok"]);
    }

    #[test]
    fn vectorize_examples() {
        let v = build_vocab(&["ab"], &spec(NgramKind::Char, 1, 1, 10)).unwrap();
        assert_eq!(v.vectorize("").nnz(), 0);
        assert_eq!(v.vectorize("zzz").nnz(), 0);
        let x = v.vectorize("aab");
        assert_eq!(x.indices, vec![0, 1]);
        assert_eq!(x.values, vec![2.0, 1.0]);
        assert_eq!(x.dim, 2);
    }

    #[test]
    fn word_vectorize_counts_bigrams() {
        let v = build_vocab(&["you are an idiot, you idiot"], &spec(NgramKind::Word, 1, 2, 100)).unwrap();
        let x = v.vectorize("Idiot! you idiot");
        let idiot = v.column("idiot").unwrap() as u32;
        let you_idiot = v.column("you idiot").unwrap() as u32;
        let get = |c: u32| x.indices.iter().position(|&i| i == c).map(|p| x.values[p]);
        assert_eq!(get(idiot), Some(2.0));
        assert_eq!(get(you_idiot), Some(1.0));
    }

    #[test]
    fn binary_and_normalized_weighting() {
        let base = build_vocab(&["aab"], &spec(NgramKind::Char, 1, 1, 10)).unwrap();
        let b = base.with_weighting(Weighting::Binary, false).vectorize("aaab");
        assert_eq!(b.values, vec![1.0, 1.0]);
        let n = base.with_weighting(Weighting::Count, true).vectorize("aaab");
        let norm: f64 = n.values.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_and_bad_spec() {
        let empty: [&str; 0] = [];
        assert!(matches!(build_vocab(&empty, &FeatureSpec::char()), Err(FeatureError::EmptyCorpus)));
        assert!(matches!(build_vocab(&[""], &FeatureSpec::char()), Err(FeatureError::EmptyCorpus)));
        let bad = FeatureSpec { n_min: 3, n_max: 2, ..FeatureSpec::char() };
        assert!(matches!(build_vocab(&["x"], &bad), Err(FeatureError::InvalidSpec(_))));
    }

    #[test]
    fn serialization_round_trip_and_version_check() {
        let v = build_vocab(&["one two three", "two three four"], &FeatureSpec::word()).unwrap();
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.vectorize("two three"), v.vectorize("two three"));
        let bumped = v.to_json().replace("\"version\":1", "\"version\":99");
        assert!(matches!(Vocabulary::from_json(&bumped), Err(FeatureError::Version { found: 99, .. })));
        assert!(Vocabulary::from_json(&v.to_json()[..20]).is_err());
    }

    #[test]
    fn unicode_lowercasing_is_consistent() {
        let v = build_vocab(&["Ünïcödé İs fun"], &FeatureSpec::char()).unwrap();
        let x = v.vectorize("ÜNÏCÖDÉ");
        assert!(x.nnz() > 0);
    }

    proptest! {
        #[test]
        fn full_coverage_counts_all_occurrences(text in "[ab ]{0,30}", n_max in 1usize..4) {
            // the alphabet is tiny, so a vocabulary from the text itself plus
            // every short string covers all n-grams that can appear
            let mut corpus = vec![text.clone()];
            corpus.push("ab ba  a b aa bb".to_string());
            let s = spec(NgramKind::Char, 1, n_max, usize::MAX);
            let v = build_vocab(&corpus, &s).unwrap();
            let x = v.vectorize(&text);
            let chars = text.chars().count();
            let expected: usize = (1..=n_max).map(|n| chars.saturating_sub(n - 1)).sum();
            prop_assert_eq!(x.values.iter().sum::<f64>() as usize, expected);
            prop_assert!(x.indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(x.indices.iter().all(|&i| (i as usize) < v.len()));
        }

        #[test]
        fn binary_values_are_zero_one(text in "\\PC{0,40}") {
            let v = build_vocab(&["the quick brown fox", "jumps over"], &FeatureSpec { weighting: Weighting::Binary, ..FeatureSpec::char() }).unwrap();
            let x = v.vectorize(&text);
            prop_assert!(x.values.iter().all(|&v| v == 1.0));
        }

        #[test]
        fn deterministic_serialization(texts in proptest::collection::vec("[a-e ]{1,20}", 1..6), max in 1usize..30) {
            let s = spec(NgramKind::Char, 1, 3, max);
            let a = build_vocab(&texts, &s);
            let b = build_vocab(&texts, &s);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a.to_json(), b.to_json());
                prop_assert!(a.len() <= max);
            }
        }
    }
}
