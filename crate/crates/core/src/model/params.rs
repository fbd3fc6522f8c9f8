use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::model::PaatConfig;
use crate::numerics::Matrix;

pub const TABLE: &str = "encoder.table";
pub const LSTM_FWD: [&str; 3] = ["lstm.forward.w_input", "lstm.forward.w_hidden", "lstm.forward.bias"];
pub const LSTM_BWD: [&str; 3] = ["lstm.backward.w_input", "lstm.backward.w_hidden", "lstm.backward.bias"];
pub const AFFINE_W: &str = "affine.weight";
pub const AFFINE_B: &str = "affine.bias";
pub const ATT_W: &str = "attention.w";
pub const ATT_U: &str = "attention.u";
pub const HEAD_HIDDEN_W: &str = "head.hidden.weight";
pub const HEAD_HIDDEN_B: &str = "head.hidden.bias";
pub const HEAD_W: &str = "head.weight";
pub const HEAD_B: &str = "head.bias";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Matrix,
    pub trainable: bool,
}

/// Every tensor of a model, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

/// `(name, shape, fan_in, trainable)` for each tensor the config builds.
pub(crate) fn layout(config: &PaatConfig) -> Vec<(&'static str, (usize, usize), usize, bool)> {
    let s = config.structure();
    let (e, u, da, l) = (config.embed_dim, config.hidden, config.attn_dim, config.labels);
    let feat = s.feature_dim(u);
    let width = s.head_width(u);
    let trainable_table = config.encoder_kind == EncoderKind::TrainableEmbedding;
    // Embedding columns are selected by a one-hot input, so fan-in is 1.
    let mut out = vec![(TABLE, (e, config.vocab_size), 1, trainable_table)];
    if s.bilstm {
        for names in [LSTM_FWD, LSTM_BWD] {
            out.push((names[0], (4 * u, e), e, true));
            out.push((names[1], (4 * u, u), u, true));
            out.push((names[2], (4 * u, 1), u, true));
        }
    } else {
        out.push((AFFINE_W, (feat, e), e, true));
        out.push((AFFINE_B, (feat, 1), e, true));
    }
    out.push((ATT_W, (da, feat), feat, true));
    out.push((ATT_U, (l, da), da, true));
    let head_in = if config.head_hidden > 0 {
        out.push((HEAD_HIDDEN_W, (config.head_hidden, width), width, true));
        out.push((HEAD_HIDDEN_B, (config.head_hidden, 1), width, true));
        config.head_hidden
    } else {
        width
    };
    out.push((HEAD_W, (head_in, l), head_in, true));
    out.push((HEAD_B, (1, l), head_in, true));
    out
}

impl ParamStore {
    /// Seeded `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn init(config: &PaatConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = layout(config)
            .into_iter()
            .map(|(name, (r, c), fan_in, trainable)| Tensor {
                name: name.to_string(),
                value: Matrix::random_uniform(r, c, 1.0 / (fan_in as f64).sqrt(), &mut rng),
                trainable,
            })
            .collect();
        ParamStore { tensors }
    }

    /// Accepts `tensors` only if names and shapes match what `config` builds.
    pub fn from_tensors(config: &PaatConfig, tensors: Vec<(String, Matrix)>) -> Result<Self> {
        let expected = layout(config);
        if expected.len() != tensors.len() {
            return Err(Error::Format(format!(
                "shape disagreement: config expects {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        let tensors = expected
            .into_iter()
            .zip(tensors)
            .map(|((name, shape, _, trainable), (found, value))| {
                if name != found {
                    return Err(Error::Format(format!("expected tensor {name}, found {found}")));
                }
                if value.shape() != shape {
                    return Err(Error::Format(format!(
                        "shape disagreement for {name}: config expects {}x{}, found {}x{}",
                        shape.0,
                        shape.1,
                        value.rows(),
                        value.cols()
                    )));
                }
                Ok(Tensor {
                    name: found,
                    value,
                    trainable,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamStore { tensors })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }

    pub fn value(&self, i: usize) -> &Matrix {
        &self.tensors[i].value
    }

    pub fn set(&mut self, name: &str, value: Matrix) -> Result<()> {
        let t = self
            .tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Contract(format!("no tensor named {name}")))?;
        if t.value.shape() != value.shape() {
            return Err(Error::shape("set tensor", t.value.shape(), value.shape()));
        }
        t.value = value;
        Ok(())
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn trainable_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.trainable).map(|t| t.value.len()).sum()
    }

    /// Rewrites a `4u`-wide head (`[V; V_p]`) into the equivalent `2u`-wide
    /// head over `V` alone, valid when `V_p == V` (one attention partition).
    /// `target` must build a model without a partition head.
    pub fn fold_partition_head(&self, target: &PaatConfig) -> Result<ParamStore> {
        if target.structure().partition_head {
            return Err(Error::Config("fold target must not use a partition head".into()));
        }
        let head_name = if target.head_hidden > 0 { HEAD_HIDDEN_W } else { HEAD_W };
        let tensors = self
            .tensors
            .iter()
            .map(|t| {
                let value = if t.name == head_name {
                    fold(&t.value, head_name == HEAD_HIDDEN_W)?
                } else {
                    t.value.clone()
                };
                Ok((t.name.clone(), value))
            })
            .collect::<Result<Vec<_>>>()?;
        ParamStore::from_tensors(target, tensors)
    }
}

/// Adds the two halves of the input dimension of a head weight.
fn fold(w: &Matrix, input_on_cols: bool) -> Result<Matrix> {
    if input_on_cols {
        let half = w.cols() / 2;
        if !w.cols().is_multiple_of(2) {
            return Err(Error::Contract("head width is not even".into()));
        }
        w.slice_cols(0, half)?.add(&w.slice_cols(half, w.cols())?)
    } else {
        let half = w.rows() / 2;
        if !w.rows().is_multiple_of(2) {
            return Err(Error::Contract("head width is not even".into()));
        }
        let t = w.transpose();
        Ok(t.slice_cols(0, half)?.add(&t.slice_cols(half, w.rows())?)?.transpose())
    }
}
