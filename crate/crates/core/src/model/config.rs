use std::fmt;
use std::str::FromStr;

use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::kv::KvMap;

/// The full model and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Paat,
    /// No partition-based encoding (`n_enc = 1`).
    NoPartitionEncoding,
    /// No partition-based attention; the head sees only `V`.
    NoPartitionAttention,
    /// Neither of the two.
    NoPartitionEither,
    /// Per-token affine map instead of the bi-LSTM.
    NoBiLstm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Paat,
        Variant::NoPartitionEncoding,
        Variant::NoPartitionAttention,
        Variant::NoPartitionEither,
        Variant::NoBiLstm,
    ];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Paat => "paat",
            Variant::NoPartitionEncoding => "paat-pe",
            Variant::NoPartitionAttention => "paat-pa",
            Variant::NoPartitionEither => "paat-pea",
            Variant::NoBiLstm => "paat-bi",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paat" => Ok(Variant::Paat),
            "paat-pe" => Ok(Variant::NoPartitionEncoding),
            "paat-pa" => Ok(Variant::NoPartitionAttention),
            "paat-pea" => Ok(Variant::NoPartitionEither),
            "paat-bi" => Ok(Variant::NoBiLstm),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaatConfig {
    pub vocab_size: usize,
    pub labels: usize,
    pub embed_dim: usize,
    /// Per-direction LSTM width `u`; attention sees `2u` features.
    pub hidden: usize,
    pub attn_dim: usize,
    pub alpha: f64,
    pub n_enc: usize,
    /// Defaults to `n_enc` when unset.
    pub n_att: Option<usize>,
    pub dropout: f64,
    pub encoder_kind: EncoderKind,
    pub gamma: f64,
    pub variant: Variant,
    /// Defaults to 8192 with partitioned encoding and 4096 without.
    pub max_tokens: Option<usize>,
    /// Width of the optional shared hidden layer in the head; 0 disables it.
    pub head_hidden: usize,
    /// Split encoder segments at section-header tokens instead of equal
    /// chunks.
    pub header_split: bool,
    pub seed: u64,
}

impl Default for PaatConfig {
    fn default() -> Self {
        PaatConfig {
            vocab_size: 2000,
            labels: 20,
            embed_dim: 32,
            hidden: 16,
            attn_dim: 32,
            alpha: 0.8,
            n_enc: 6,
            n_att: None,
            dropout: 0.3,
            encoder_kind: EncoderKind::TrainableEmbedding,
            gamma: 0.5,
            variant: Variant::Paat,
            max_tokens: None,
            head_hidden: 0,
            header_split: false,
            seed: 1,
        }
    }
}

/// What a config actually builds once the variant rules are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Structure {
    pub n_enc: usize,
    /// Segments used by partition attention (1 when it is unused).
    pub n_att: usize,
    /// Whether `V_p` reaches the classifier (head width `4u` vs `2u`).
    pub partition_head: bool,
    pub bilstm: bool,
}

impl Structure {
    pub fn feature_dim(&self, hidden: usize) -> usize {
        2 * hidden
    }

    pub fn head_width(&self, hidden: usize) -> usize {
        if self.partition_head {
            4 * hidden
        } else {
            2 * hidden
        }
    }
}

impl PaatConfig {
    /// Full-scale dimensions (2u = 1024, d_a = 512, e = 768).
    pub fn parity() -> Self {
        PaatConfig {
            hidden: 512,
            attn_dim: 512,
            embed_dim: 768,
            ..PaatConfig::default()
        }
    }

    pub fn requested_n_att(&self) -> usize {
        self.n_att.unwrap_or(self.n_enc)
    }

    /// Applies the variant rules. A single attention partition makes `V_p`
    /// equal to `V`, so it collapses to the no-partition-attention head.
    pub fn structure(&self) -> Structure {
        use Variant::*;
        let n_enc = match self.variant {
            NoPartitionEncoding | NoPartitionEither => 1,
            _ => self.n_enc,
        };
        let wants_partition = matches!(self.variant, Paat | NoPartitionEncoding | NoBiLstm);
        let partition_head = wants_partition && self.requested_n_att() > 1;
        Structure {
            n_enc,
            n_att: if partition_head { self.requested_n_att() } else { 1 },
            partition_head,
            bilstm: self.variant != NoBiLstm,
        }
    }

    pub fn effective_max_tokens(&self) -> usize {
        self.max_tokens
            .unwrap_or(if self.structure().n_enc > 1 { 8192 } else { 4096 })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.labels == 0 {
            return fail("vocab_size and labels must be positive".into());
        }
        if self.embed_dim == 0 || self.hidden == 0 || self.attn_dim == 0 {
            return fail("embed_dim, hidden and attn_dim must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.n_enc == 0 || self.requested_n_att() == 0 {
            return fail("partition counts must be at least 1".into());
        }
        if self.max_tokens == Some(0) {
            return fail("max_tokens must be at least 1".into());
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "vocab_size",
        "labels",
        "embed_dim",
        "hidden",
        "attn_dim",
        "alpha",
        "n_enc",
        "n_att",
        "dropout",
        "encoder_kind",
        "gamma",
        "variant",
        "max_tokens",
        "head_hidden",
        "header_split",
        "seed",
    ];

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("vocab_size", self.vocab_size);
        m.set("labels", self.labels);
        m.set("embed_dim", self.embed_dim);
        m.set("hidden", self.hidden);
        m.set("attn_dim", self.attn_dim);
        m.set("alpha", self.alpha);
        m.set("n_enc", self.n_enc);
        m.set("n_att", self.requested_n_att());
        m.set("dropout", self.dropout);
        m.set("encoder_kind", self.encoder_kind);
        m.set("gamma", self.gamma);
        m.set("variant", self.variant);
        m.set("max_tokens", self.effective_max_tokens());
        m.set("head_hidden", self.head_hidden);
        m.set("header_split", self.header_split);
        m.set("seed", self.seed);
        m
    }

    pub fn apply_kv(&mut self, m: &KvMap) -> Result<()> {
        m.read("vocab_size", &mut self.vocab_size)?;
        m.read("labels", &mut self.labels)?;
        m.read("embed_dim", &mut self.embed_dim)?;
        m.read("hidden", &mut self.hidden)?;
        m.read("attn_dim", &mut self.attn_dim)?;
        m.read("alpha", &mut self.alpha)?;
        m.read("n_enc", &mut self.n_enc)?;
        if m.contains("n_att") {
            let mut n = 0usize;
            m.read("n_att", &mut n)?;
            self.n_att = Some(n);
        }
        m.read("dropout", &mut self.dropout)?;
        m.read("encoder_kind", &mut self.encoder_kind)?;
        m.read("gamma", &mut self.gamma)?;
        m.read("variant", &mut self.variant)?;
        if m.contains("max_tokens") {
            let mut n = 0usize;
            m.read("max_tokens", &mut n)?;
            self.max_tokens = Some(n);
        }
        m.read("head_hidden", &mut self.head_hidden)?;
        m.read("header_split", &mut self.header_split)?;
        m.read("seed", &mut self.seed)?;
        Ok(())
    }

    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let mut c = PaatConfig::default();
        c.apply_kv(m)?;
        c.validate()?;
        Ok(c)
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation micro-F1.
    pub patience: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Documents per optimizer step.
    pub accum_steps: usize,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            patience: 5,
            lr: 0.0015,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            accum_steps: 1,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "epochs",
        "patience",
        "lr",
        "beta1",
        "beta2",
        "eps",
        "weight_decay",
        "accum_steps",
        "threshold",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.accum_steps == 0 || self.patience == 0 {
            return Err(Error::Config("epochs, patience and accum_steps must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0 && self.weight_decay.is_finite() && self.weight_decay >= 0.0 && self.eps > 0.0) {
            return Err(Error::Config("lr and weight_decay must be >= 0 and eps > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("epochs", self.epochs);
        m.set("patience", self.patience);
        m.set("lr", self.lr);
        m.set("beta1", self.beta1);
        m.set("beta2", self.beta2);
        m.set("eps", self.eps);
        m.set("weight_decay", self.weight_decay);
        m.set("accum_steps", self.accum_steps);
        m.set("threshold", self.threshold);
        m
    }

    pub fn apply_kv(&mut self, m: &KvMap) -> Result<()> {
        m.read("epochs", &mut self.epochs)?;
        m.read("patience", &mut self.patience)?;
        m.read("lr", &mut self.lr)?;
        m.read("beta1", &mut self.beta1)?;
        m.read("beta2", &mut self.beta2)?;
        m.read("eps", &mut self.eps)?;
        m.read("weight_decay", &mut self.weight_decay)?;
        m.read("accum_steps", &mut self.accum_steps)?;
        m.read("threshold", &mut self.threshold)?;
        Ok(())
    }
}
