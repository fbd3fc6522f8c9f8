use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{parse_label_name, TextDocument};
use crate::error::{Error, Result};

pub fn write_dataset(docs: &[TextDocument], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for d in docs {
        if d.id.is_empty() || d.id.contains(['\t', '\n']) {
            return Err(Error::Input(format!("document id {:?} cannot be serialized", d.id)));
        }
        writeln!(out, "{}\t{}\t{}", d.id, d.tokens.join(" "), d.labels.join(";")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<TextDocument>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub(crate) fn parse_dataset(text: &str) -> Result<Vec<TextDocument>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| parse_line(l).map_err(|msg| Error::Parse { line: i + 1, msg }))
        .collect()
}

fn parse_line(line: &str) -> std::result::Result<TextDocument, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    let id = fields[0];
    if id.is_empty() {
        return Err("empty document id".into());
    }
    let tokens: Vec<String> = fields[1].split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(format!("document {id} has no tokens"));
    }
    let labels: Vec<String> = if fields[2].is_empty() {
        Vec::new()
    } else {
        fields[2].split(';').map(str::to_string).collect()
    };
    for (i, l) in labels.iter().enumerate() {
        if parse_label_name(l).is_none() {
            return Err(format!("malformed label name {l:?}"));
        }
        if labels[..i].contains(l) {
            return Err(format!("duplicate label {l}"));
        }
    }
    Ok(TextDocument {
        id: id.to_string(),
        tokens,
        labels,
    })
}
