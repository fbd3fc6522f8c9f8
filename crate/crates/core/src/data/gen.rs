//! Synthetic multi-label corpus with planted label signatures.
//!
//! Every label owns a disjoint block of `signature_per_label` token ids. A
//! document is cut into `regions` equal-width regions; for each gold label,
//! `dispersion` distinct regions are chosen and `signature_density`
//! signature tokens of that label are planted at uniform free positions in
//! each. Different sites of the same label use different signature tokens.
//! Remaining positions are noise drawn uniformly from ids that belong to no
//! signature block.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Document, HEADER_ID};
use crate::error::{Error, Result};
use crate::kv::KvMap;

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub labels: usize,
    pub vocab_size: usize,
    pub signature_per_label: usize,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    pub labels_per_doc_min: usize,
    pub labels_per_doc_max: usize,
    /// Number of regions that each carry evidence for a gold label.
    pub dispersion: usize,
    pub regions: usize,
    /// Signature tokens planted per evidence site.
    pub signature_density: usize,
    pub num_docs: usize,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec::dispersed()
    }
}

/// Range of signature ids owned by each label start here.
const FIRST_SIGNATURE_ID: usize = HEADER_ID as usize + 1;

impl GenSpec {
    /// Evidence for each gold label is spread over all six regions.
    pub fn dispersed() -> Self {
        GenSpec {
            labels: 20,
            vocab_size: 2000,
            signature_per_label: 6,
            doc_len_min: 600,
            doc_len_max: 600,
            labels_per_doc_min: 2,
            labels_per_doc_max: 4,
            dispersion: 6,
            regions: 6,
            signature_density: 1,
            num_docs: 2800,
            seed: 17,
        }
    }

    /// Same corpus shape, all evidence for a label inside one region.
    pub fn concentrated() -> Self {
        GenSpec {
            dispersion: 1,
            ..GenSpec::dispersed()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "dispersed" => Ok(GenSpec::dispersed()),
            "concentrated" => Ok(GenSpec::concentrated()),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn signature_ids(&self, label: usize) -> std::ops::Range<usize> {
        let start = FIRST_SIGNATURE_ID + label * self.signature_per_label;
        start..start + self.signature_per_label
    }

    /// Label owning `token`, if it is a signature token.
    pub fn label_of_signature(&self, token: u32) -> Option<usize> {
        let t = token as usize;
        let end = FIRST_SIGNATURE_ID + self.labels * self.signature_per_label;
        (t >= FIRST_SIGNATURE_ID && t < end).then(|| (t - FIRST_SIGNATURE_ID) / self.signature_per_label)
    }

    fn noise_range(&self) -> std::ops::Range<usize> {
        FIRST_SIGNATURE_ID + self.labels * self.signature_per_label..self.vocab_size
    }

    /// Half-open region `r` of a document of length `len`.
    pub fn region(&self, len: usize, r: usize) -> (usize, usize) {
        (r * len / self.regions, (r + 1) * len / self.regions)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.labels == 0 || self.num_docs == 0 {
            return fail("labels and num_docs must be positive".into());
        }
        if self.dispersion == 0 || self.signature_density == 0 {
            return fail("dispersion and signature_density must be at least 1".into());
        }
        if self.dispersion > self.regions {
            return fail(format!(
                "dispersion {} exceeds region count {}",
                self.dispersion, self.regions
            ));
        }
        if self.signature_per_label < self.dispersion * self.signature_density {
            return fail(format!(
                "signature_per_label {} cannot supply {} sites x {} tokens",
                self.signature_per_label, self.dispersion, self.signature_density
            ));
        }
        if self.noise_range().is_empty() {
            return fail(format!(
                "vocab_size {} leaves no noise tokens after {} signature ids",
                self.vocab_size,
                self.labels * self.signature_per_label
            ));
        }
        if self.doc_len_min == 0 || self.doc_len_min > self.doc_len_max {
            return fail(format!("bad document length range {}..={}", self.doc_len_min, self.doc_len_max));
        }
        if self.labels_per_doc_min > self.labels_per_doc_max || self.labels_per_doc_max > self.labels {
            return fail(format!(
                "bad labels-per-document range {}..={} for {} labels",
                self.labels_per_doc_min, self.labels_per_doc_max, self.labels
            ));
        }
        let volume = self.labels_per_doc_max * self.dispersion * self.signature_density;
        let narrowest = self.doc_len_min / self.regions;
        if volume > self.doc_len_min || self.labels_per_doc_max * self.signature_density > narrowest {
            return fail(format!(
                "signature volume {volume} ({} per region) does not fit documents of length {} split into {} regions",
                self.labels_per_doc_max * self.signature_density,
                self.doc_len_min,
                self.regions
            ));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("labels", self.labels);
        m.set("vocab_size", self.vocab_size);
        m.set("signature_per_label", self.signature_per_label);
        m.set("doc_len_min", self.doc_len_min);
        m.set("doc_len_max", self.doc_len_max);
        m.set("labels_per_doc_min", self.labels_per_doc_min);
        m.set("labels_per_doc_max", self.labels_per_doc_max);
        m.set("dispersion", self.dispersion);
        m.set("regions", self.regions);
        m.set("signature_density", self.signature_density);
        m.set("num_docs", self.num_docs);
        m.set("data_seed", self.seed);
        m
    }

    pub const KEYS: &'static [&'static str] = &[
        "labels",
        "vocab_size",
        "signature_per_label",
        "doc_len_min",
        "doc_len_max",
        "labels_per_doc_min",
        "labels_per_doc_max",
        "dispersion",
        "regions",
        "signature_density",
        "num_docs",
        "data_seed",
    ];

    pub fn apply_kv(&mut self, m: &KvMap) -> Result<()> {
        m.read("labels", &mut self.labels)?;
        m.read("vocab_size", &mut self.vocab_size)?;
        m.read("signature_per_label", &mut self.signature_per_label)?;
        m.read("doc_len_min", &mut self.doc_len_min)?;
        m.read("doc_len_max", &mut self.doc_len_max)?;
        m.read("labels_per_doc_min", &mut self.labels_per_doc_min)?;
        m.read("labels_per_doc_max", &mut self.labels_per_doc_max)?;
        m.read("dispersion", &mut self.dispersion)?;
        m.read("regions", &mut self.regions)?;
        m.read("signature_density", &mut self.signature_density)?;
        m.read("num_docs", &mut self.num_docs)?;
        m.read("data_seed", &mut self.seed)?;
        Ok(())
    }
}

pub fn generate_corpus(spec: &GenSpec) -> Result<Vec<Document>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = spec.noise_range();
    let mut docs = Vec::with_capacity(spec.num_docs);
    for d in 0..spec.num_docs {
        let len = rng.gen_range(spec.doc_len_min..=spec.doc_len_max);
        let n_labels = rng.gen_range(spec.labels_per_doc_min..=spec.labels_per_doc_max);
        let mut gold: Vec<usize> = index::sample(&mut rng, spec.labels, n_labels).into_vec();
        gold.sort_unstable();

        let mut tokens: Vec<Option<u32>> = vec![None; len];
        for &label in &gold {
            let mut sig: Vec<usize> = spec.signature_ids(label).collect();
            sig.shuffle(&mut rng);
            let mut sites = index::sample(&mut rng, spec.regions, spec.dispersion).into_vec();
            sites.sort_unstable();
            for (site, &r) in sites.iter().enumerate() {
                let (start, end) = spec.region(len, r);
                let chunk = &sig[site * spec.signature_density..(site + 1) * spec.signature_density];
                for &tok in chunk {
                    let free: Vec<usize> = (start..end).filter(|&p| tokens[p].is_none()).collect();
                    let pos = *free.choose(&mut rng).expect("feasibility checked");
                    tokens[pos] = Some(tok as u32);
                }
            }
        }
        let tokens = tokens
            .into_iter()
            .map(|t| t.unwrap_or_else(|| rng.gen_range(noise.clone()) as u32))
            .collect();
        docs.push(Document {
            id: format!("doc{d:05}"),
            tokens,
            gold,
        });
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub docs: usize,
    /// Smallest number of regions holding a gold label's signature tokens,
    /// over all (document, gold label) pairs.
    pub min_regions_per_label: usize,
    pub mean_regions_per_label: f64,
    /// Signature tokens of labels that are not gold for their document.
    pub foreign_signature_tokens: usize,
}

impl AuditReport {
    pub fn passes(&self, spec: &GenSpec) -> bool {
        self.min_regions_per_label >= spec.dispersion && self.foreign_signature_tokens == 0
    }
}

/// Scans a generated corpus and counts where signature evidence landed.
pub fn audit_corpus(docs: &[Document], spec: &GenSpec) -> AuditReport {
    let mut min_regions = usize::MAX;
    let mut total_regions = 0usize;
    let mut pairs = 0usize;
    let mut foreign = 0usize;
    for doc in docs {
        let len = doc.tokens.len();
        let mut seen = vec![vec![false; spec.regions]; spec.labels];
        for (pos, &tok) in doc.tokens.iter().enumerate() {
            if let Some(label) = spec.label_of_signature(tok) {
                if doc.gold.contains(&label) {
                    let r = (0..spec.regions)
                        .find(|&r| {
                            let (s, e) = spec.region(len, r);
                            pos >= s && pos < e
                        })
                        .unwrap_or(spec.regions - 1);
                    seen[label][r] = true;
                } else {
                    foreign += 1;
                }
            }
        }
        for &label in &doc.gold {
            let count = seen[label].iter().filter(|&&b| b).count();
            min_regions = min_regions.min(count);
            total_regions += count;
            pairs += 1;
        }
    }
    AuditReport {
        docs: docs.len(),
        min_regions_per_label: if pairs == 0 { 0 } else { min_regions },
        mean_regions_per_label: if pairs == 0 {
            0.0
        } else {
            total_regions as f64 / pairs as f64
        },
        foreign_signature_tokens: foreign,
    }
}
