//! Run settings resolved from defaults, an optional `key=value` file and
//! command-line flags, in that order of precedence.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use paat::data::GenSpec;
use paat::kv::{parse_list, KvMap};
use paat::{PaatConfig, TrainConfig};

/// Keys that belong to the run rather than to the model, optimizer or
/// generator.
pub const RUN_KEYS: &[&str] = &["k", "train_ratio", "valid_ratio", "test_ratio"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub model: PaatConfig,
    pub train: TrainConfig,
    pub gen: GenSpec,
    pub ks: Vec<usize>,
    pub ratios: (f64, f64, f64),
}

impl Default for RunSettings {
    fn default() -> Self {
        let gen = GenSpec::dispersed();
        let n = gen.num_docs as f64;
        RunSettings {
            model: PaatConfig::default(),
            train: TrainConfig::default(),
            gen,
            ks: vec![5, 8],
            ratios: (2000.0 / n, 300.0 / n, 500.0 / n),
        }
    }
}

fn known(key: &str) -> bool {
    PaatConfig::KEYS.contains(&key)
        || TrainConfig::KEYS.contains(&key)
        || GenSpec::KEYS.contains(&key)
        || RUN_KEYS.contains(&key)
}

impl RunSettings {
    pub fn apply(&mut self, m: &KvMap) -> Result<()> {
        if let Some(bad) = m.keys().find(|k| !known(k)) {
            bail!("unknown setting {bad:?}");
        }
        self.model.apply_kv(m)?;
        self.train.apply_kv(m)?;
        self.gen.apply_kv(m)?;
        if let Some(k) = m.get("k") {
            self.ks = parse_list(k)?;
        }
        m.read("train_ratio", &mut self.ratios.0)?;
        m.read("valid_ratio", &mut self.ratios.1)?;
        m.read("test_ratio", &mut self.ratios.2)?;
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let m = KvMap::parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        self.apply(&m)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.ks.contains(&0) {
            bail!("k values must be positive");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = self.gen.to_kv();
        m.merge(&self.train.to_kv());
        m.merge(&self.model.to_kv());
        let ks: Vec<String> = self.ks.iter().map(usize::to_string).collect();
        m.set("k", ks.join(","));
        m.set("train_ratio", self.ratios.0);
        m.set("valid_ratio", self.ratios.1);
        m.set("test_ratio", self.ratios.2);
        m
    }

    /// Logs every resolved setting, one `key=value` per line.
    pub fn echo(&self) {
        for (k, v) in self.to_kv().iter() {
            log::info!("config {k}={v}");
        }
    }
}

/// Builds a key/value map from `--set key=value` flags.
pub fn overrides(pairs: &[String]) -> Result<KvMap> {
    let mut m = KvMap::new();
    for p in pairs {
        let (k, v) = KvMap::parse_assignment(p)?;
        m.set(k, v);
    }
    Ok(m)
}
