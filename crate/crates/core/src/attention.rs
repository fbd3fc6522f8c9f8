//! Conventional and partition-based label attention.
//!
//! Both mechanisms share a single `W` (`d_a x 2u`) and `U` (`L x d_a`).
//!
//! Conventional:
//!
//! ```text
//! Z = tanh(W H)        d_a x N
//! A = softmax_row(U Z) L x N
//! V = H A^T            2u x L
//! ```
//!
//! Partition-based, for every segment `k` with column slice `H_k`:
//!
//! ```text
//! (A_k, V_k) = conventional attention on H_k
//! Â_k  = U tanh(W V_k)          L x L, no softmax
//! T_k  = alpha * diag(Â_k)      L x 1
//! M    = softmax_row([T_1 .. T_n])
//! V_p[:, l] = sum_k M[l][k] * V_k[:, l]
//! ```
//!
//! `alpha` scales the segment logits before the segment softmax only.

use serde::Serialize;

use crate::data::Vocab;
use crate::encoder::SegmentBoundaries;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, NodeId, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `d_a x 2u`
    pub w: Matrix,
    /// `L x d_a`
    pub u: Matrix,
}

impl AttentionParams {
    pub fn labels(&self) -> usize {
        self.u.rows()
    }

    fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.w.cols() != feature_dim {
            return Err(Error::shape("attention W x H", self.w.shape(), (feature_dim, 0)));
        }
        if self.u.cols() != self.w.rows() {
            return Err(Error::shape("attention U x Z", self.u.shape(), self.w.shape()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `L x N`, each row a distribution over tokens.
    pub a: Matrix,
    /// `2u x L`, column `l` is the feature vector for label `l`.
    pub v: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionAttentionOutput {
    pub per_segment: Vec<AttentionOutput>,
    /// `L x n` smoothed segment scores.
    pub t: Matrix,
    /// `L x n` mixing weights.
    pub m: Matrix,
    /// `2u x L`
    pub v_p: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    pub w: NodeId,
    pub u: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct LabelAttentionNodes {
    pub a: NodeId,
    pub v: NodeId,
}

#[derive(Debug, Clone)]
pub struct PartitionAttentionNodes {
    pub per_segment: Vec<LabelAttentionNodes>,
    pub t: NodeId,
    pub m: NodeId,
    pub v_p: NodeId,
}

fn check_nodes(tape: &Tape, p: AttentionNodes, h: NodeId) -> Result<()> {
    AttentionParams {
        w: tape.value(p.w).clone(),
        u: tape.value(p.u).clone(),
    }
    .validate(tape.value(h).rows())
}

pub fn label_attention_on_tape(tape: &mut Tape, p: AttentionNodes, h: NodeId) -> Result<LabelAttentionNodes> {
    check_nodes(tape, p, h)?;
    let wh = tape.matmul(p.w, h)?;
    let z = tape.tanh(wh);
    let scores = tape.matmul(p.u, z)?;
    let a = tape.row_softmax(scores);
    let v = tape.matmul_nt(h, a)?;
    Ok(LabelAttentionNodes { a, v })
}

pub fn partition_attention_on_tape(
    tape: &mut Tape,
    p: AttentionNodes,
    h: NodeId,
    boundaries: &SegmentBoundaries,
    alpha: f64,
) -> Result<PartitionAttentionNodes> {
    check_nodes(tape, p, h)?;
    let n_tokens = tape.value(h).cols();
    if boundaries.n_tokens() != n_tokens {
        return Err(Error::Contract(format!(
            "attention segments cover {} columns but H has {n_tokens}",
            boundaries.n_tokens()
        )));
    }
    let mut per_segment = Vec::with_capacity(boundaries.len());
    let mut t_cols = Vec::with_capacity(boundaries.len());
    for &(start, end) in boundaries.ranges() {
        let h_k = tape.slice_cols(h, start, end)?;
        let seg = label_attention_on_tape(tape, p, h_k)?;
        let wv = tape.matmul(p.w, seg.v)?;
        let z_hat = tape.tanh(wv);
        let a_hat = tape.matmul(p.u, z_hat)?;
        let diag = tape.diag_of(a_hat)?;
        t_cols.push(tape.scale(diag, alpha));
        per_segment.push(seg);
    }
    let t = tape.concat_cols(&t_cols)?;
    let m = tape.row_softmax(t);
    let mut v_p: Option<NodeId> = None;
    for (k, seg) in per_segment.iter().enumerate() {
        let m_col = tape.slice_cols(m, k, k + 1)?;
        let m_row = tape.transpose(m_col);
        let term = tape.mul_row_broadcast(seg.v, m_row)?;
        v_p = Some(match v_p {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok(PartitionAttentionNodes {
        per_segment,
        t,
        m,
        v_p: v_p.expect("at least one segment"),
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("smoothing constant must lie in (0, 1], got {alpha}")))
    }
}

/// Conventional label attention over `h` (`2u x N`).
pub fn label_attention(params: &AttentionParams, h: &Matrix) -> Result<AttentionOutput> {
    params.validate(h.rows())?;
    let mut tape = Tape::new();
    let p = AttentionNodes {
        w: tape.constant(params.w.clone()),
        u: tape.constant(params.u.clone()),
    };
    let hn = tape.constant(h.clone());
    let out = label_attention_on_tape(&mut tape, p, hn)?;
    Ok(AttentionOutput {
        a: tape.value(out.a).clone(),
        v: tape.value(out.v).clone(),
    })
}

/// Partition-based label attention over the column segments of `h`.
pub fn partition_attention(
    params: &AttentionParams,
    h: &Matrix,
    boundaries: &SegmentBoundaries,
    alpha: f64,
) -> Result<PartitionAttentionOutput> {
    check_alpha(alpha)?;
    params.validate(h.rows())?;
    let mut tape = Tape::new();
    let p = AttentionNodes {
        w: tape.constant(params.w.clone()),
        u: tape.constant(params.u.clone()),
    };
    let hn = tape.constant(h.clone());
    let out = partition_attention_on_tape(&mut tape, p, hn, boundaries, alpha)?;
    Ok(collect_partition(&tape, &out))
}

pub(crate) fn collect_partition(tape: &Tape, out: &PartitionAttentionNodes) -> PartitionAttentionOutput {
    PartitionAttentionOutput {
        per_segment: out
            .per_segment
            .iter()
            .map(|s| AttentionOutput {
                a: tape.value(s.a).clone(),
                v: tape.value(s.v).clone(),
            })
            .collect(),
        t: tape.value(out.t).clone(),
        m: tape.value(out.m).clone(),
        v_p: tape.value(out.v_p).clone(),
    }
}

/// Row-wise softmax over the segment axis of an `L x n` score matrix.
pub fn segment_mix(t: &Matrix) -> Matrix {
    t.row_softmax()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenWeight {
    pub position: usize,
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelAttentionMap {
    pub label: usize,
    /// From the conventional attention row, sorted by descending weight.
    pub conventional: Vec<TokenWeight>,
    /// `M` row for this label.
    pub segment_weights: Vec<f64>,
    /// `A_k` rows scaled by the segment weight, sorted by descending weight.
    pub partition: Vec<TokenWeight>,
}

fn ranked(mut entries: Vec<TokenWeight>) -> Vec<TokenWeight> {
    entries.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.position.cmp(&b.position)));
    entries
}

/// Per-label token rankings for the conventional and partition attention of
/// one document.
pub fn attention_map(
    conventional: &AttentionOutput,
    partition: &PartitionAttentionOutput,
    boundaries: &SegmentBoundaries,
    doc_tokens: &[u32],
    vocab: &Vocab,
    labels: &[usize],
) -> Result<Vec<LabelAttentionMap>> {
    let n = doc_tokens.len();
    if conventional.a.cols() != n || boundaries.n_tokens() != n || partition.per_segment.len() != boundaries.len() {
        return Err(Error::Contract("attention outputs were not produced from these tokens".into()));
    }
    let names = doc_tokens
        .iter()
        .map(|&id| {
            vocab
                .token(id)
                .map(str::to_string)
                .ok_or_else(|| Error::Input(format!("vocabulary has no token with id {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    labels
        .iter()
        .map(|&l| {
            if l >= conventional.a.rows() {
                return Err(Error::Input(format!("label index {l} out of range")));
            }
            let conv = (0..n)
                .map(|j| TokenWeight {
                    position: j,
                    token: names[j].clone(),
                    weight: conventional.a.get(l, j),
                })
                .collect();
            let mut part = Vec::with_capacity(n);
            for (k, &(start, end)) in boundaries.ranges().iter().enumerate() {
                let mk = partition.m.get(l, k);
                let a_k = &partition.per_segment[k].a;
                for (i, name) in names[start..end].iter().enumerate() {
                    part.push(TokenWeight {
                        position: start + i,
                        token: name.clone(),
                        weight: mk * a_k.get(l, i),
                    });
                }
            }
            Ok(LabelAttentionMap {
                label: l,
                conventional: ranked(conv),
                segment_weights: partition.m.row(l).to_vec(),
                partition: ranked(part),
            })
        })
        .collect()
}
