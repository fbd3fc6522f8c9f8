use rand::Rng;

use crate::attention::{
    collect_partition, label_attention_on_tape, partition_attention_on_tape, AttentionNodes, AttentionOutput,
    PartitionAttentionOutput,
};
use crate::data::{Document, HEADER_ID};
use crate::encoder::{
    bilstm_on_tape, dropout_mask, segment_at_headers, segment_tokens, BiLstmNodes, SegmentBoundaries,
    SegmentEncoderSpec,
};
use crate::error::{Error, Result};
use crate::model::params::{self, ParamStore};
use crate::model::PaatConfig;
use crate::numerics::{sigmoid, CustomOp, Matrix, NodeId, Tape};

pub const PROB_CLAMP: f64 = 1e-12;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean binary cross-entropy over labels of clamped probabilities.
pub fn bce_loss(probs: &[f64], gold: &[f64]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(gold)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / probs.len() as f64
}

/// BCE on a `1 x L` logit row.
struct BceOp {
    gold: Vec<f64>,
}

impl BceOp {
    fn value(&self, logits: &Matrix) -> f64 {
        let probs: Vec<f64> = logits.data().iter().map(|&z| sigmoid(z)).collect();
        bce_loss(&probs, &self.gold)
    }
}

impl CustomOp for BceOp {
    fn name(&self) -> &'static str {
        "bce"
    }

    fn backward(&self, inputs: &[&Matrix], _output: &Matrix, grad: &Matrix) -> Vec<Option<Matrix>> {
        let z = inputs[0];
        let n = z.len() as f64;
        let g = grad.get(0, 0);
        // The clamp is flat outside its range, so clamped labels get no gradient.
        let data = z
            .data()
            .iter()
            .zip(&self.gold)
            .map(|(&z, &y)| {
                let p = sigmoid(z);
                if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                    0.0
                } else {
                    g * (p - y) / n
                }
            })
            .collect();
        vec![Some(Matrix::from_vec_unchecked(z.rows(), z.cols(), data))]
    }
}

pub(crate) fn gold_f64(doc: &Document, labels: usize) -> Result<Vec<f64>> {
    if let Some(&l) = doc.gold.iter().find(|&&l| l >= labels) {
        return Err(Error::Input(format!("document {} has label {l} but the model has {labels}", doc.id)));
    }
    Ok(doc.gold_vector(labels).into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    /// Clamped sigmoid of the logits.
    pub probs: Vec<f64>,
}

/// Everything needed to render attention maps for one document.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// Token ids after truncation.
    pub tokens: Vec<u32>,
    pub prediction: Prediction,
    pub conventional: AttentionOutput,
    pub partition: PartitionAttentionOutput,
    pub boundaries: SegmentBoundaries,
}

struct Recorded {
    tape: Tape,
    params: Vec<NodeId>,
    h: NodeId,
    attention: AttentionNodes,
    v: NodeId,
    logits: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaatModel {
    pub config: PaatConfig,
    pub params: ParamStore,
}

impl PaatModel {
    pub fn new(config: PaatConfig) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::init(&config);
        Ok(PaatModel { config, params })
    }

    pub fn with_params(config: PaatConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let tensors = params
            .tensors()
            .iter()
            .map(|t| (t.name.clone(), t.value.clone()))
            .collect();
        let params = ParamStore::from_tensors(&config, tensors)?;
        Ok(PaatModel { config, params })
    }

    fn encoder_spec(&self) -> SegmentEncoderSpec {
        SegmentEncoderSpec {
            kind: self.config.encoder_kind,
            vocab_size: self.config.vocab_size,
            embed_dim: self.config.embed_dim,
            gamma: self.config.gamma,
        }
    }

    /// Documents longer than the token budget keep their leading tokens.
    pub fn truncate<'a>(&self, tokens: &'a [u32]) -> Result<&'a [u32]> {
        if tokens.is_empty() {
            return Err(Error::Input("document has no tokens".into()));
        }
        let max = self.config.effective_max_tokens();
        if tokens.len() > max {
            log::warn!("truncating document of {} tokens to {max}", tokens.len());
            return Ok(&tokens[..max]);
        }
        Ok(tokens)
    }

    pub fn encoder_boundaries(&self, tokens: &[u32]) -> Result<SegmentBoundaries> {
        let n = self.config.structure().n_enc;
        if self.config.header_split {
            segment_at_headers(tokens, HEADER_ID, n)
        } else {
            segment_tokens(tokens.len(), n)
        }
    }

    fn record<R: Rng + ?Sized>(&self, tokens: &[u32], dropout: Option<&mut R>) -> Result<Recorded> {
        let s = self.config.structure();
        let mut tape = Tape::new();
        let params: Vec<NodeId> = self
            .params
            .tensors()
            .iter()
            .map(|t| {
                if t.trainable {
                    tape.param(t.value.clone())
                } else {
                    tape.constant(t.value.clone())
                }
            })
            .collect();
        let node = |name: &str| -> NodeId {
            params[self.params.index_of(name).expect("layout contains every tensor name")]
        };

        let enc = self.encoder_boundaries(tokens)?;
        let x = self.encoder_spec().encode_on_tape(&mut tape, node(params::TABLE), tokens, &enc)?;
        let mut h = if s.bilstm {
            let nodes = BiLstmNodes {
                forward: params::LSTM_FWD.map(node),
                backward: params::LSTM_BWD.map(node),
            };
            bilstm_on_tape(&mut tape, x, &nodes)?
        } else {
            let wx = tape.matmul(node(params::AFFINE_W), x)?;
            tape.add_col_broadcast(wx, node(params::AFFINE_B))?
        };
        if let Some(rng) = dropout {
            if self.config.dropout > 0.0 {
                let (r, c) = tape.value(h).shape();
                let mask = tape.constant(dropout_mask(r, c, self.config.dropout, rng));
                h = tape.mul(h, mask)?;
            }
        }

        let attention = AttentionNodes {
            w: node(params::ATT_W),
            u: node(params::ATT_U),
        };
        let v = label_attention_on_tape(&mut tape, attention, h)?.v;
        let mut features = v;
        if s.partition_head {
            let att = segment_tokens(tokens.len(), s.n_att)?;
            let part = partition_attention_on_tape(&mut tape, attention, h, &att, self.config.alpha)?;
            features = tape.concat_rows(&[v, part.v_p])?;
        }
        if self.config.head_hidden > 0 {
            let wf = tape.matmul(node(params::HEAD_HIDDEN_W), features)?;
            let pre = tape.add_col_broadcast(wf, node(params::HEAD_HIDDEN_B))?;
            features = tape.tanh(pre);
        }
        let weighted = tape.mul(node(params::HEAD_W), features)?;
        let sums = tape.col_sums(weighted);
        let logits = tape.add(sums, node(params::HEAD_B))?;
        Ok(Recorded {
            tape,
            params,
            h,
            attention,
            v,
            logits,
        })
    }

    fn prediction(tape: &Tape, logits: NodeId) -> Prediction {
        let logits = tape.value(logits).data().to_vec();
        let probs = logits.iter().map(|&z| clamp_prob(sigmoid(z))).collect();
        Prediction { logits, probs }
    }

    /// Inference forward pass (no dropout).
    pub fn predict(&self, tokens: &[u32]) -> Result<Prediction> {
        let tokens = self.truncate(tokens)?;
        let rec = self.record::<rand_chacha::ChaCha8Rng>(tokens, None)?;
        Ok(Self::prediction(&rec.tape, rec.logits))
    }

    /// Loss and per-tensor gradients for one document. Dropout is active
    /// when `rng` is given. Frozen tensors get `None`.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        doc: &Document,
        rng: Option<&mut R>,
    ) -> Result<(f64, Vec<Option<Matrix>>)> {
        let tokens = self.truncate(&doc.tokens)?;
        let mut rec = self.record(tokens, rng)?;
        let gold = gold_f64(doc, self.config.labels)?;
        let op = BceOp { gold };
        let loss = op.value(rec.tape.value(rec.logits));
        let loss_node = rec.tape.custom(&[rec.logits], Matrix::scalar(loss), Box::new(op));
        let mut grads = rec.tape.backward(loss_node)?;
        let out = rec
            .params
            .iter()
            .zip(self.params.tensors())
            .map(|(&id, t)| if t.trainable { grads.take(id) } else { None })
            .collect();
        Ok((loss, out))
    }

    /// Inference pass that also returns both attention mechanisms. Partition
    /// attention is computed with the requested `n_att` even for variants
    /// whose head does not use it.
    pub fn forward_with_attention(&self, tokens: &[u32]) -> Result<AttentionTrace> {
        let tokens = self.truncate(tokens)?;
        let mut rec = self.record::<rand_chacha::ChaCha8Rng>(tokens, None)?;
        let prediction = Self::prediction(&rec.tape, rec.logits);
        let boundaries = segment_tokens(tokens.len(), self.config.requested_n_att())?;
        let conv = label_attention_on_tape(&mut rec.tape, rec.attention, rec.h)?;
        debug_assert_eq!(rec.tape.value(conv.v), rec.tape.value(rec.v));
        let part = partition_attention_on_tape(&mut rec.tape, rec.attention, rec.h, &boundaries, self.config.alpha)?;
        Ok(AttentionTrace {
            tokens: tokens.to_vec(),
            prediction,
            conventional: AttentionOutput {
                a: rec.tape.value(conv.a).clone(),
                v: rec.tape.value(conv.v).clone(),
            },
            partition: collect_partition(&rec.tape, &part),
            boundaries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(variant: Variant) -> PaatConfig {
        PaatConfig {
            vocab_size: 12,
            labels: 3,
            embed_dim: 4,
            hidden: 3,
            attn_dim: 3,
            n_enc: 2,
            variant,
            seed: 9,
            ..PaatConfig::default()
        }
    }

    fn doc() -> Document {
        Document {
            id: "d".into(),
            tokens: vec![3, 4, 5, 6, 7, 8, 9, 10],
            gold: vec![0, 2],
        }
    }

    #[test]
    fn bce_known_value() {
        let l = bce_loss(&[0.5, 0.5], &[1.0, 0.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(&[0.0], &[1.0]).is_finite());
    }

    #[test]
    fn probabilities_in_range_for_every_variant() {
        for v in Variant::ALL {
            let m = PaatModel::new(small(v)).unwrap();
            let p = m.predict(&doc().tokens).unwrap();
            assert_eq!(p.probs.len(), 3);
            assert!(p.probs.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn loss_matches_prediction() {
        let m = PaatModel::new(small(Variant::Paat)).unwrap();
        let p = m.predict(&doc().tokens).unwrap();
        let (loss, grads) = m.loss_and_grads::<ChaCha8Rng>(&doc(), None).unwrap();
        assert!((loss - bce_loss(&p.probs, &gold_f64(&doc(), 3).unwrap())).abs() < 1e-14);
        assert_eq!(grads.len(), m.params.len());
        assert!(grads.iter().all(|g| g.is_some()));
    }

    #[test]
    fn dropout_changes_loss_only_in_training() {
        let m = PaatModel::new(small(Variant::Paat)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, _) = m.loss_and_grads::<ChaCha8Rng>(&doc(), None).unwrap();
        let (b, _) = m.loss_and_grads(&doc(), Some(&mut rng)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn truncation_keeps_leading_tokens() {
        let m = PaatModel::new(PaatConfig {
            max_tokens: Some(5),
            ..small(Variant::Paat)
        })
        .unwrap();
        let t = m.forward_with_attention(&doc().tokens).unwrap();
        assert_eq!(t.tokens, vec![3, 4, 5, 6, 7]);
        assert_eq!(m.predict(&doc().tokens).unwrap(), m.predict(&doc().tokens[..5]).unwrap());
    }

    #[test]
    fn out_of_vocabulary_is_an_error() {
        let m = PaatModel::new(small(Variant::Paat)).unwrap();
        assert!(m.predict(&[3, 40]).is_err());
        assert!(m.predict(&[]).is_err());
    }
}
