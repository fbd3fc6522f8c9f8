use std::fmt;
use std::str::FromStr;

use crate::encoder::SegmentBoundaries;
use crate::error::{Error, Result};
use crate::numerics::{CustomOp, Matrix, NodeId, Tape};

/// Toy stand-ins for a pretrained segment encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// Trainable embedding table plus segment-local context mixing.
    TrainableEmbedding,
    /// Fixed seeded random projection of each token's one-hot vector.
    FrozenProjection,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::TrainableEmbedding => "trainable",
            EncoderKind::FrozenProjection => "frozen",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trainable" | "trainable-embedding" => Ok(EncoderKind::TrainableEmbedding),
            "frozen" | "frozen-projection" => Ok(EncoderKind::FrozenProjection),
            other => Err(Error::Config(format!("unknown encoder kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEncoderSpec {
    pub kind: EncoderKind,
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Weight of the segment-mean context term, in `[0, 1]`.
    pub gamma: f64,
}

impl SegmentEncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.vocab_size == 0 {
            return Err(Error::Config("embed_dim and vocab_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn trainable(&self) -> bool {
        self.kind == EncoderKind::TrainableEmbedding
    }

    fn mixes(&self) -> bool {
        self.kind == EncoderKind::TrainableEmbedding && self.gamma != 0.0
    }

    pub(crate) fn check_ids(&self, tokens: &[u32]) -> Result<()> {
        match tokens.iter().position(|&t| t as usize >= self.vocab_size) {
            Some(pos) => Err(Error::Input(format!(
                "token id {} at position {pos} is outside the vocabulary of {}",
                tokens[pos], self.vocab_size
            ))),
            None => Ok(()),
        }
    }

    /// Embeds every segment and concatenates the results: `e x N`.
    pub(crate) fn encode_on_tape(
        &self,
        tape: &mut Tape,
        table: NodeId,
        tokens: &[u32],
        boundaries: &SegmentBoundaries,
    ) -> Result<NodeId> {
        self.check_ids(tokens)?;
        if boundaries.n_tokens() != tokens.len() {
            return Err(Error::Contract(format!(
                "segments cover {} tokens but the document has {}",
                boundaries.n_tokens(),
                tokens.len()
            )));
        }
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let x = tape.gather_cols(table, &ids)?;
        if !self.mixes() {
            return Ok(x);
        }
        let mix = SegmentMix {
            ranges: boundaries.ranges().to_vec(),
            gamma: self.gamma,
        };
        let value = mix.apply(tape.value(x));
        Ok(tape.custom(&[x], value, Box::new(mix)))
    }
}

/// Encodes one segment: `e x N_k`. `table` is the `e x vocab` embedding or
/// projection matrix.
pub fn encode_segment(spec: &SegmentEncoderSpec, table: &Matrix, tokens: &[u32]) -> Result<Matrix> {
    if tokens.is_empty() {
        return Err(Error::Input("empty segment".into()));
    }
    let mut tape = Tape::new();
    let t = tape.constant(table.clone());
    let b = SegmentBoundaries::whole(tokens.len())?;
    let out = spec.encode_on_tape(&mut tape, t, tokens, &b)?;
    Ok(tape.value(out).clone())
}

/// `y_j = x_j + gamma * mean(x over the segment containing j)`.
pub struct SegmentMix {
    ranges: Vec<(usize, usize)>,
    gamma: f64,
}

impl SegmentMix {
    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        let cols = x.cols();
        for r in 0..x.rows() {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            for &(s, e) in &self.ranges {
                let mean = row[s..e].iter().sum::<f64>() / (e - s) as f64;
                for v in &mut row[s..e] {
                    *v += self.gamma * mean;
                }
            }
        }
        out
    }
}

impl CustomOp for SegmentMix {
    fn name(&self) -> &'static str {
        "segment_mix"
    }

    fn backward(&self, _inputs: &[&Matrix], _output: &Matrix, grad: &Matrix) -> Vec<Option<Matrix>> {
        // The map is linear and self-adjoint: I + gamma * blockdiag(1/|S| 11^T).
        vec![Some(self.apply(grad))]
    }
}
