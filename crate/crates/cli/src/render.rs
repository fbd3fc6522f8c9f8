//! Plain-text attention rendering. Each token gets one of five shading
//! characters by the quantile of its weight within the map.

use std::fmt::Write as _;

use anyhow::Result;
use paat::attention::{LabelAttentionMap, TokenWeight};
use paat::data::{label_name, Vocab};
use paat::SegmentBoundaries;

pub const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];

/// Bucket index per position: the share of weights strictly below a weight,
/// scaled to five buckets. Equal weights share a bucket.
pub fn quantile_buckets(weights: &[TokenWeight], n: usize) -> Vec<usize> {
    let mut sorted: Vec<f64> = weights.iter().map(|w| w.weight).collect();
    sorted.sort_by(f64::total_cmp);
    let mut out = vec![0; n];
    for w in weights {
        let below = sorted.partition_point(|&x| x < w.weight);
        out[w.position] = (below * SHADES.len() / sorted.len().max(1)).min(SHADES.len() - 1);
    }
    out
}

fn render_map(out: &mut String, title: &str, weights: &[TokenWeight], tokens: &[String], cuts: &[usize], width: usize) {
    let buckets = quantile_buckets(weights, tokens.len());
    let cell = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1);
    writeln!(out, "  {title}").expect("writing to a String");
    for start in (0..tokens.len()).step_by(width.max(1)) {
        let end = (start + width.max(1)).min(tokens.len());
        let mut words = format!("  {start:>6} ");
        let mut shade = String::from("         ");
        for j in start..end {
            let sep = if cuts.contains(&j) && j != 0 { '|' } else { ' ' };
            words.push(sep);
            shade.push(sep);
            write!(words, "{:<cell$}", tokens[j]).expect("writing to a String");
            shade.extend(std::iter::repeat_n(SHADES[buckets[j]], cell));
        }
        writeln!(out, "{}", words.trim_end()).expect("writing to a String");
        writeln!(out, "{}", shade.trim_end()).expect("writing to a String");
    }
}

pub fn render_text(
    maps: &[LabelAttentionMap],
    tokens: &[u32],
    vocab: &Vocab,
    boundaries: &SegmentBoundaries,
    width: usize,
) -> Result<String> {
    let names = vocab.decode(tokens)?;
    let cuts: Vec<usize> = boundaries.ranges().iter().map(|r| r.0).collect();
    let mut out = format!("shading by weight quantile, low to high: {:?}; '|' marks a segment start\n", SHADES);
    for m in maps {
        writeln!(out, "\n{}", label_name(m.label)).expect("writing to a String");
        let mix: Vec<String> = m.segment_weights.iter().map(|w| format!("{w:.3}")).collect();
        writeln!(out, "  segment weights: {}", mix.join(" ")).expect("writing to a String");
        render_map(&mut out, "conventional", &m.conventional, &names, &cuts, width);
        render_map(&mut out, "partition", &m.partition, &names, &cuts, width);
    }
    Ok(out)
}
