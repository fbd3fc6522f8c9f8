mod common;

use common::{auc_pairs, count_cells, safe_ratio, top_k};
use paat::metrics::{auc_binary, disagreement_report, f1_scores, macro_micro_auc, precision_at_k};
use paat::ScoreMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    scores: Vec<Vec<f64>>,
    other: Vec<Vec<f64>>,
    gold: Vec<Vec<bool>>,
}

/// Scores drawn from a coarse grid so ties are common.
fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = rng.gen_range(1..=7);
    let labels = rng.gen_range(1..=6);
    let grid = rng.gen_range(2..=10);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..docs)
            .map(|_| (0..labels).map(|_| rng.gen_range(0..=grid) as f64 / grid as f64).collect())
            .collect()
    };
    let scores = draw(&mut rng);
    let other = draw(&mut rng);
    let gold = (0..docs).map(|_| (0..labels).map(|_| rng.gen_bool(0.4)).collect()).collect();
    Case { scores, other, gold }
}

fn matrix(scores: &[Vec<f64>], gold: &[Vec<bool>]) -> ScoreMatrix {
    ScoreMatrix::from_rows(scores, gold).unwrap()
}

fn binarize(scores: &[Vec<f64>], t: f64) -> Vec<Vec<bool>> {
    scores.iter().map(|r| r.iter().map(|&s| s >= t).collect()).collect()
}

fn eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn every_metric_matches_brute_force() {
    let t = 0.5;
    for seed in 0..1000 {
        let c = case(seed);
        let (docs, labels) = (c.scores.len(), c.scores[0].len());
        let sm = matrix(&c.scores, &c.gold);

        let auc = macro_micro_auc(&sm);
        let per_label: Vec<f64> = (0..labels)
            .filter_map(|l| {
                let s: Vec<f64> = c.scores.iter().map(|r| r[l]).collect();
                let g: Vec<bool> = c.gold.iter().map(|r| r[l]).collect();
                auc_pairs(&s, &g)
            })
            .collect();
        let want_macro = (!per_label.is_empty()).then(|| per_label.iter().sum::<f64>() / per_label.len() as f64);
        assert_eq!(auc.excluded_labels, labels - per_label.len());
        match (auc.macro_auc, want_macro) {
            (Some(a), Some(b)) => assert!(eq(a, b), "seed {seed}"),
            (a, b) => assert_eq!(a, b),
        }
        let flat_s: Vec<f64> = c.scores.concat();
        let flat_g: Vec<bool> = c.gold.concat();
        match (auc.micro_auc, auc_pairs(&flat_s, &flat_g)) {
            (Some(a), Some(b)) => assert!(eq(a, b), "seed {seed}"),
            (a, b) => assert_eq!(a, b),
        }

        let pred = binarize(&c.scores, t);
        let f1 = f1_scores(&sm, t).unwrap();
        let (tp, fp, fn_) = count_cells(&pred, &c.gold, |_, _| true);
        assert!(eq(f1.micro_precision, safe_ratio(tp, tp + fp)));
        assert!(eq(f1.micro_recall, safe_ratio(tp, tp + fn_)));
        assert!(eq(f1.micro_f1, safe_ratio(2 * tp, 2 * tp + fp + fn_)));
        let macro_f1: f64 = (0..labels)
            .map(|l| {
                let (tp, fp, fn_) = count_cells(&pred, &c.gold, |_, j| j == l);
                safe_ratio(2 * tp, 2 * tp + fp + fn_)
            })
            .sum::<f64>()
            / labels as f64;
        assert!(eq(f1.macro_f1, macro_f1), "seed {seed}");

        for k in 1..=labels {
            let want: f64 = (0..docs)
                .map(|d| top_k(&c.scores[d], k).iter().filter(|&&l| c.gold[d][l]).count() as f64 / k as f64)
                .sum::<f64>()
                / docs as f64;
            assert!(eq(precision_at_k(&sm, k).unwrap(), want), "seed {seed} k {k}");
        }

        let other = matrix(&c.other, &c.gold);
        let rep = disagreement_report(&sm, &other, t).unwrap();
        let pred_b = binarize(&c.other, t);
        let differs = |d: usize, l: usize| pred[d][l] != pred_b[d][l];
        let cells = (0..docs).flat_map(|d| (0..labels).map(move |l| (d, l))).filter(|&(d, l)| differs(d, l)).count();
        assert_eq!(rep.cells, cells);
        if cells == 0 {
            assert!(rep.a.is_none() && rep.b.is_none());
            continue;
        }
        for (p, stats) in [(&pred, rep.a.unwrap()), (&pred_b, rep.b.unwrap())] {
            let (tp, fp, fn_) = count_cells(p, &c.gold, differs);
            assert!(eq(stats.micro_precision, safe_ratio(tp, tp + fp)));
            assert!(eq(stats.micro_recall, safe_ratio(tp, tp + fn_)));
            let active: Vec<usize> = (0..labels).filter(|&l| (0..docs).any(|d| differs(d, l))).collect();
            let (mut mp, mut mr) = (0.0, 0.0);
            for &l in &active {
                let (tp, fp, fn_) = count_cells(p, &c.gold, |d, j| j == l && differs(d, j));
                mp += safe_ratio(tp, tp + fp);
                mr += safe_ratio(tp, tp + fn_);
            }
            assert!(eq(stats.macro_precision, mp / active.len() as f64));
            assert!(eq(stats.macro_recall, mr / active.len() as f64));
        }
    }
}

#[test]
fn worked_examples() {
    let auc = auc_binary(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    assert_eq!(auc, 0.75);
    assert_eq!(auc_binary(&[0.3; 4], &[true, false, true, false]), Some(0.5));
    assert_eq!(auc_binary(&[0.3, 0.4], &[true, true]), None);

    // TP=2, FP=1, FN=1.
    let sm = matrix(&[vec![0.9, 0.8], vec![0.7, 0.1]], &[vec![true, false], vec![true, true]]);
    let f = f1_scores(&sm, 0.5).unwrap();
    assert_eq!(f.micro_precision, 2.0 / 3.0);
    assert_eq!(f.micro_recall, 2.0 / 3.0);
    assert_eq!(f.micro_f1, 2.0 / 3.0);

    let sm = matrix(&[vec![0.9, 0.1, 0.8]], &[vec![true, false, true]]);
    assert_eq!(precision_at_k(&sm, 2).unwrap(), 1.0);
    assert!(precision_at_k(&sm, 4).is_err());
}

#[test]
fn disagreement_extremes() {
    let gold = vec![vec![true, false], vec![false, true]];
    let a = matrix(&[vec![0.9, 0.1], vec![0.2, 0.8]], &gold);
    let b = matrix(&[vec![0.1, 0.9], vec![0.7, 0.3]], &gold);
    let rep = disagreement_report(&a, &b, 0.5).unwrap();
    assert_eq!(rep.cells, 4);
    let (ra, rb) = (rep.a.unwrap(), rep.b.unwrap());
    assert_eq!((ra.micro_precision, ra.micro_recall), (1.0, 1.0));
    assert_eq!((rb.micro_precision, rb.micro_recall), (0.0, 0.0));
    let same = disagreement_report(&a, &a, 0.5).unwrap();
    assert_eq!(same.cells, 0);
    assert!(same.a.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_ignores_monotone_transforms(seed in any::<u64>()) {
        let c = case(seed);
        let s = c.scores.concat();
        let g = c.gold.concat();
        let squashed: Vec<f64> = s.iter().map(|x| x.powi(3)).collect();
        prop_assert_eq!(auc_binary(&s, &g), auc_binary(&squashed, &g));
    }

    #[test]
    fn micro_f1_ignores_label_order(seed in any::<u64>()) {
        let c = case(seed);
        let rev = |m: &Vec<Vec<f64>>| m.iter().map(|r| r.iter().rev().copied().collect()).collect::<Vec<Vec<f64>>>();
        let rev_gold: Vec<Vec<bool>> = c.gold.iter().map(|r| r.iter().rev().copied().collect()).collect();
        let a = f1_scores(&matrix(&c.scores, &c.gold), 0.5).unwrap().micro_f1;
        let b = f1_scores(&matrix(&rev(&c.scores), &rev_gold), 0.5).unwrap().micro_f1;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn macro_metrics_ignore_document_order(seed in any::<u64>()) {
        let c = case(seed);
        let s: Vec<Vec<f64>> = c.scores.iter().rev().cloned().collect();
        let g: Vec<Vec<bool>> = c.gold.iter().rev().cloned().collect();
        let a = f1_scores(&matrix(&c.scores, &c.gold), 0.5).unwrap();
        let b = f1_scores(&matrix(&s, &g), 0.5).unwrap();
        prop_assert_eq!(a.macro_f1, b.macro_f1);
        prop_assert_eq!(macro_micro_auc(&matrix(&c.scores, &c.gold)).macro_auc, macro_micro_auc(&matrix(&s, &g)).macro_auc);
    }
}
