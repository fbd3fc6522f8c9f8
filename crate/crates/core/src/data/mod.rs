//! Documents, synthetic corpora, dataset files, vocabulary and splits.
//!
//! Dataset files are UTF-8 with one document per line:
//!
//! ```text
//! <doc-id>\t<space-separated tokens>\t<semicolon-separated label names>
//! ```
//!
//! Label `l` is spelled `C{l:02}` (`C00`, `C01`, ...). The label field may be
//! empty.

mod gen;
mod io;
mod split;
mod vocab;

pub use gen::{audit_corpus, generate_corpus, AuditReport, GenSpec};
pub use io::{read_dataset, write_dataset};
pub use split::{split_dataset, split_sizes, HasId};
pub use vocab::{synthetic_token, Vocab, HEADER_ID, PAD_ID, UNK_ID};

use crate::error::{Error, Result};

/// A tokenized document with gold label indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<u32>,
    /// Sorted, duplicate-free label indices.
    pub gold: Vec<usize>,
}

/// A document as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

pub fn label_name(label: usize) -> String {
    format!("C{label:02}")
}

/// Inverse of [`label_name`]; `None` for anything not in canonical form.
pub fn parse_label_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('C')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let l: usize = digits.parse().ok()?;
    (label_name(l) == name).then_some(l)
}

impl Document {
    pub fn to_text(&self, vocab: &Vocab) -> Result<TextDocument> {
        Ok(TextDocument {
            id: self.id.clone(),
            tokens: vocab.decode(&self.tokens)?,
            labels: self.gold.iter().map(|&l| label_name(l)).collect(),
        })
    }

    pub fn gold_vector(&self, labels: usize) -> Vec<bool> {
        let mut v = vec![false; labels];
        for &l in &self.gold {
            v[l] = true;
        }
        v
    }
}

impl TextDocument {
    /// Maps tokens through `vocab` and label names to indices below `labels`.
    pub fn to_document(&self, vocab: &Vocab, labels: usize) -> Result<Document> {
        let mut gold = self
            .labels
            .iter()
            .map(|name| match parse_label_name(name) {
                Some(l) if l < labels => Ok(l),
                _ => Err(Error::Input(format!(
                    "unknown label {name:?} in document {} (expected C00..{})",
                    self.id,
                    label_name(labels.saturating_sub(1))
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        gold.sort_unstable();
        gold.dedup();
        if self.tokens.is_empty() {
            return Err(Error::Input(format!("document {} has no tokens", self.id)));
        }
        Ok(Document {
            id: self.id.clone(),
            tokens: vocab.encode(&self.tokens),
            gold,
        })
    }
}

/// Converts a whole dataset, failing on the first bad document.
pub fn to_documents(docs: &[TextDocument], vocab: &Vocab, labels: usize) -> Result<Vec<Document>> {
    docs.iter().map(|d| d.to_document(vocab, labels)).collect()
}
