//! Feature construction: six structured features plus an L2-normalised tf-idf
//! block over a training-set vocabulary of at most 400 terms.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::Instance;

pub const DEFAULT_VOCAB_CAP: usize = 400;
pub const STRUCTURED_DIM: usize = 6;
pub const STRUCTURED_NAMES: [&str; STRUCTURED_DIM] =
    ["left", "top", "width", "height", "page", "numeric_value"];

/// English stopwords (179 entries), fixed so tokenisation never depends on the host.
pub const STOPWORDS: [&str; 179] = [
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
    "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
    "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
    "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
    "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
    "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
    "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
    "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
    "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan",
    "shan't", "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't",
    "wouldn", "wouldn't",
];

fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.iter().copied().collect())
}

pub fn is_stopword(token: &str) -> bool {
    stopword_set().contains(token)
}

/// Whitespace split, lowercase, trim non-alphanumerics at both ends, drop
/// empties and stopwords.
pub fn tokenize_normalize(segment: &str) -> Vec<String> {
    segment
        .split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let t = lower.trim_matches(|c: char| !c.is_alphanumeric());
            (!t.is_empty() && !is_stopword(t)).then(|| t.to_string())
        })
        .collect()
}

/// Top terms by training frequency with smoothed idf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    idf: Vec<f64>,
    doc_count: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    idf: Vec<f64>,
    doc_count: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.idf, r.doc_count)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            idf: v.idf,
            doc_count: v.doc_count,
        }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, idf: Vec<f64>, doc_count: usize) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            terms,
            idf,
            doc_count,
            index,
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Keeps the `cap` most frequent terms (ties lexicographic) with
/// `idf = ln((1 + N) / (1 + df)) + 1`.
pub fn fit_vocab(segments: &[Vec<String>], cap: usize) -> Result<Vocabulary> {
    if segments.iter().all(|s| s.is_empty()) {
        return Err(Error::invalid("cannot fit a vocabulary on an empty corpus"));
    }
    let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for seg in segments {
        let mut seen = HashSet::new();
        for t in seg {
            *tf.entry(t.as_str()).or_default() += 1;
            if seen.insert(t.as_str()) {
                *df.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = tf.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    let n = segments.len() as f64;
    let terms: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
    let idf = ranked
        .iter()
        .map(|(t, _)| ((1.0 + n) / (1.0 + df[t] as f64)).ln() + 1.0)
        .collect();
    Ok(Vocabulary::from_parts(terms, idf, segments.len()))
}

/// Structured block plus a sparse tf-idf block of dimension `tfidf_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub structured: [f64; STRUCTURED_DIM],
    /// (term index, weight), sorted by index, zeros omitted.
    pub tfidf: Vec<(usize, f64)>,
    pub tfidf_dim: usize,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        STRUCTURED_DIM + self.tfidf_dim
    }

    /// Nonzero entries over the full `[structured | tfidf]` index space.
    pub fn sparse(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.structured
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .chain(self.tfidf.iter().map(|&(i, v)| (STRUCTURED_DIM + i, v)))
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        out[..STRUCTURED_DIM].copy_from_slice(&self.structured);
        for &(i, v) in &self.tfidf {
            out[STRUCTURED_DIM + i] = v;
        }
        out
    }
}

pub fn structured_features(instance: &Instance) -> [f64; STRUCTURED_DIM] {
    [
        instance.left as f64,
        instance.top as f64,
        instance.width as f64,
        instance.height as f64,
        instance.page as f64,
        instance.numeric_value,
    ]
}

/// Raw counts × idf, then L2-normalised; unknown tokens are ignored.
pub fn vectorize(instance: &Instance, vocab: &Vocabulary) -> FeatureVector {
    vectorize_tokens(
        structured_features(instance),
        &tokenize_normalize(&instance.segment),
        vocab,
    )
}

pub fn vectorize_tokens(
    structured: [f64; STRUCTURED_DIM],
    tokens: &[String],
    vocab: &Vocabulary,
) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    let mut tfidf: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, c)| (i, c * vocab.idf[i]))
        .collect();
    let norm = tfidf.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut tfidf {
            *v /= norm;
        }
    }
    FeatureVector {
        structured,
        tfidf,
        tfidf_dim: vocab.len(),
    }
}

/// Z-score parameters for the structured block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: [f64; STRUCTURED_DIM],
    pub std: [f64; STRUCTURED_DIM],
}

impl Scaler {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; STRUCTURED_DIM],
            std: [1.0; STRUCTURED_DIM],
        }
    }
}

/// Population mean/std of the structured features.
pub fn fit_scaler(vectors: &[FeatureVector]) -> Result<Scaler> {
    if vectors.len() < 2 {
        return Err(Error::invalid(format!(
            "scaler needs at least 2 training vectors, got {}",
            vectors.len()
        )));
    }
    let n = vectors.len() as f64;
    let mut mean = [0.0; STRUCTURED_DIM];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.structured) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; STRUCTURED_DIM];
    for v in vectors {
        for j in 0..STRUCTURED_DIM {
            var[j] += (v.structured[j] - mean[j]).powi(2);
        }
    }
    let std = var.map(|s| (s / n).sqrt());
    Ok(Scaler { mean, std })
}

/// Standardises the structured block; zero-variance features pass through.
pub fn apply_scaler(vector: &FeatureVector, scaler: &Scaler) -> FeatureVector {
    let mut out = vector.clone();
    for j in 0..STRUCTURED_DIM {
        if scaler.std[j] > 0.0 {
            out.structured[j] = (vector.structured[j] - scaler.mean[j]) / scaler.std[j];
        }
    }
    out
}
