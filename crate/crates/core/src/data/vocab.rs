use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::TextDocument;
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const HEADER_ID: u32 = 2;

const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<sec>"];

/// Bijection between token strings and ids. Ids 0..=2 are reserved for
/// padding, unknown and section-header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Input(format!("vocabulary must start with reserved token {r:?} at id {i}")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Input(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Vocabulary where every non-reserved id `i` is spelled `w{i}`.
    pub fn synthetic(size: usize) -> Self {
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain((RESERVED.len()..size).map(synthetic_token))
            .collect();
        Vocab::from_tokens(tokens).expect("synthetic vocabulary is well formed")
    }

    /// Tokens with frequency `>= min_freq` get ids by descending frequency,
    /// ties broken lexicographically. Everything else maps to unknown.
    pub fn build(docs: &[TextDocument], min_freq: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for d in docs {
            for t in &d.tokens {
                if !RESERVED.contains(&t.as_str()) {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Vocab::from_tokens(tokens).expect("built vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK_ID`] when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&i| {
                self.token(i)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Input(format!("vocabulary has no token with id {i}")))
            })
            .collect()
    }

    /// One token per line, id equals line index.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::from_tokens(text.lines().map(str::to_string).collect())
    }
}

pub fn synthetic_token(id: usize) -> String {
    format!("w{id}")
}
