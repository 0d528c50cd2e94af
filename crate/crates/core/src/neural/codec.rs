use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token ids: PAD = 0, UNK = 1, then training tokens by descending
/// frequency (ties alphabetical).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "CodecRepr", into = "CodecRepr")]
pub struct TokenCodec {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct CodecRepr {
    tokens: Vec<String>,
}

impl From<CodecRepr> for TokenCodec {
    fn from(r: CodecRepr) -> Self {
        let index = r.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: r.tokens, index }
    }
}

impl From<TokenCodec> for CodecRepr {
    fn from(c: TokenCodec) -> Self {
        Self { tokens: c.tokens }
    }
}

impl TokenCodec {
    pub fn fit(corpus: &[Vec<String>]) -> Result<Self> {
        if corpus.iter().all(Vec::is_empty) {
            return Err(Error::invalid("cannot build a token codec from an empty corpus"));
        }
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for t in corpus.iter().flatten() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<String> = [PAD_TOKEN, UNK_TOKEN]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .map(str::to_string)
            .collect();
        Ok(CodecRepr { tokens }.into())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Ids without padding.
    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Truncates the tail, then right-pads with PAD to exactly `max_len`.
    pub fn encode(&self, tokens: &[String], max_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens.iter().take(max_len).map(|t| self.id(t)).collect();
        ids.resize(max_len, PAD_ID);
        ids
    }
}
