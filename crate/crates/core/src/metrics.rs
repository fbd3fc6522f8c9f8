//! Multi-label evaluation: AUC, F1, precision@k and the disagreement
//! analysis between two models.
//!
//! Conventions:
//! - AUC is the rank statistic; tied scores get half credit. Labels with no
//!   positives or no negatives are excluded from macro AUC and counted.
//! - Per-label precision, recall and F1 define `0/0` as `0`; macro F1
//!   averages over every label.
//! - Top-k ties are broken by the lower label index.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// `docs x labels` scores with aligned gold decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    docs: usize,
    labels: usize,
    scores: Vec<f64>,
    gold: Vec<bool>,
}

impl ScoreMatrix {
    pub fn new(docs: usize, labels: usize, scores: Vec<f64>, gold: Vec<bool>) -> Result<Self> {
        if docs == 0 || labels == 0 {
            return Err(Error::Input("score matrix needs at least one document and label".into()));
        }
        if scores.len() != docs * labels || gold.len() != docs * labels {
            return Err(Error::shape(
                "score matrix",
                (docs, labels),
                (scores.len(), gold.len()),
            ));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Input(format!("score {bad} outside [0, 1]")));
        }
        Ok(ScoreMatrix {
            docs,
            labels,
            scores,
            gold,
        })
    }

    pub fn from_rows(scores: &[Vec<f64>], gold: &[Vec<bool>]) -> Result<Self> {
        let labels = scores.first().map_or(0, Vec::len);
        if scores.len() != gold.len()
            || scores.iter().any(|r| r.len() != labels)
            || gold.iter().any(|g| g.len() != labels)
        {
            return Err(Error::Input("ragged score or gold rows".into()));
        }
        Self::new(scores.len(), labels, scores.concat(), gold.concat())
    }

    pub fn docs(&self) -> usize {
        self.docs
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn score(&self, d: usize, l: usize) -> f64 {
        self.scores[d * self.labels + l]
    }

    pub fn is_gold(&self, d: usize, l: usize) -> bool {
        self.gold[d * self.labels + l]
    }

    fn label_column(&self, l: usize) -> (Vec<f64>, Vec<bool>) {
        (
            (0..self.docs).map(|d| self.score(d, l)).collect(),
            (0..self.docs).map(|d| self.is_gold(d, l)).collect(),
        )
    }
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half. `None` when either class is empty.
pub fn auc_binary(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len());
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| positives[k]).count();
        rank_sum += mid * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucSummary {
    pub macro_auc: Option<f64>,
    pub micro_auc: Option<f64>,
    pub excluded_labels: usize,
}

pub fn macro_micro_auc(sm: &ScoreMatrix) -> AucSummary {
    let mut per_label = Vec::with_capacity(sm.labels);
    let mut excluded = 0;
    for l in 0..sm.labels {
        let (s, g) = sm.label_column(l);
        match auc_binary(&s, &g) {
            Some(a) => per_label.push(a),
            None => excluded += 1,
        }
    }
    let macro_auc = (!per_label.is_empty()).then(|| per_label.iter().sum::<f64>() / per_label.len() as f64);
    AucSummary {
        macro_auc,
        micro_auc: auc_binary(&sm.scores, &sm.gold),
        excluded_labels: excluded,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    fn add(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelStats {
    pub label: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Summary {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub per_label: Vec<LabelStats>,
}

pub fn f1_scores(sm: &ScoreMatrix, threshold: f64) -> Result<F1Summary> {
    check_threshold(threshold)?;
    let mut pooled = Counts::default();
    let mut per_label = Vec::with_capacity(sm.labels);
    for l in 0..sm.labels {
        let mut c = Counts::default();
        for d in 0..sm.docs {
            c.add(sm.score(d, l) >= threshold, sm.is_gold(d, l));
        }
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.fn_ += c.fn_;
        per_label.push(LabelStats {
            label: l,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            support: c.tp + c.fn_,
        });
    }
    let mean = |f: fn(&LabelStats) -> f64| per_label.iter().map(f).sum::<f64>() / per_label.len() as f64;
    Ok(F1Summary {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        micro_precision: pooled.precision(),
        micro_recall: pooled.recall(),
        micro_f1: pooled.f1(),
        per_label,
    })
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("threshold must lie in (0, 1), got {threshold}")))
    }
}

/// Mean over documents of `|top-k ∩ gold| / k`.
pub fn precision_at_k(sm: &ScoreMatrix, k: usize) -> Result<f64> {
    if k == 0 || k > sm.labels {
        return Err(Error::Input(format!("k must lie in 1..={}, got {k}", sm.labels)));
    }
    let mut total = 0.0;
    for d in 0..sm.docs {
        let mut order: Vec<usize> = (0..sm.labels).collect();
        // Stable sort keeps lower label index first among ties.
        order.sort_by(|&a, &b| sm.score(d, b).total_cmp(&sm.score(d, a)));
        let hits = order[..k].iter().filter(|&&l| sm.is_gold(d, l)).count();
        total += hits as f64 / k as f64;
    }
    Ok(total / sm.docs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementStats {
    pub macro_precision: f64,
    pub micro_precision: f64,
    pub macro_recall: f64,
    pub micro_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementReport {
    /// Cells where the thresholded decisions differ.
    pub cells: usize,
    pub total_cells: usize,
    /// Labels with at least one disagreement cell.
    pub labels: usize,
    pub a: Option<DisagreementStats>,
    pub b: Option<DisagreementStats>,
}

/// Precision and recall of both models restricted to the cells where their
/// thresholded decisions differ. Both matrices must carry the same gold.
pub fn disagreement_report(a: &ScoreMatrix, b: &ScoreMatrix, threshold: f64) -> Result<DisagreementReport> {
    check_threshold(threshold)?;
    if (a.docs, a.labels) != (b.docs, b.labels) {
        return Err(Error::shape("disagreement", (a.docs, a.labels), (b.docs, b.labels)));
    }
    if a.gold != b.gold {
        return Err(Error::Input("compared score matrices carry different gold labels".into()));
    }
    let mut per_label_a = vec![Counts::default(); a.labels];
    let mut per_label_b = vec![Counts::default(); a.labels];
    let mut selected = vec![0usize; a.labels];
    let mut cells = 0;
    for d in 0..a.docs {
        for l in 0..a.labels {
            let pa = a.score(d, l) >= threshold;
            let pb = b.score(d, l) >= threshold;
            if pa == pb {
                continue;
            }
            cells += 1;
            selected[l] += 1;
            let g = a.is_gold(d, l);
            per_label_a[l].add(pa, g);
            per_label_b[l].add(pb, g);
        }
    }
    let stats = |per: &[Counts]| -> Option<DisagreementStats> {
        if cells == 0 {
            return None;
        }
        let mut pooled = Counts::default();
        let (mut mp, mut mr, mut n) = (0.0, 0.0, 0usize);
        for (c, &s) in per.iter().zip(&selected) {
            if s == 0 {
                continue;
            }
            pooled.tp += c.tp;
            pooled.fp += c.fp;
            pooled.fn_ += c.fn_;
            mp += c.precision();
            mr += c.recall();
            n += 1;
        }
        Some(DisagreementStats {
            macro_precision: mp / n as f64,
            micro_precision: pooled.precision(),
            macro_recall: mr / n as f64,
            micro_recall: pooled.recall(),
        })
    };
    Ok(DisagreementReport {
        cells,
        total_cells: a.docs * a.labels,
        labels: selected.iter().filter(|&&s| s > 0).count(),
        a: stats(&per_label_a),
        b: stats(&per_label_b),
    })
}

/// Full evaluation report. Serialized key names are part of the report
/// file format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub macro_auc: Option<f64>,
    pub micro_auc: Option<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub p_at_k: BTreeMap<usize, f64>,
    pub excluded_labels: usize,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub threshold: f64,
    pub per_label: Vec<LabelStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disagreement: Option<DisagreementReport>,
}

pub fn evaluate(sm: &ScoreMatrix, ks: &[usize], threshold: f64) -> Result<MetricsReport> {
    let auc = macro_micro_auc(sm);
    let f1 = f1_scores(sm, threshold)?;
    let p_at_k = ks
        .iter()
        .map(|&k| precision_at_k(sm, k).map(|p| (k, p)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(MetricsReport {
        macro_auc: auc.macro_auc,
        micro_auc: auc.micro_auc,
        macro_f1: f1.macro_f1,
        micro_f1: f1.micro_f1,
        p_at_k,
        excluded_labels: auc.excluded_labels,
        macro_precision: f1.macro_precision,
        macro_recall: f1.macro_recall,
        micro_precision: f1.micro_precision,
        micro_recall: f1.micro_recall,
        threshold,
        per_label: f1.per_label,
        disagreement: None,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
