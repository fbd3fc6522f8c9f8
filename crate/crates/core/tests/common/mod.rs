//! Scalar-loop reference implementations used as test oracles. Nothing here
//! calls the library's numeric kernels.

#![allow(dead_code, clippy::needless_range_loop)]

use paat::model::params;
use paat::{Matrix, PaatModel, Variant};
use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix) -> Mat {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn from_rows(rows: &Mat) -> Matrix {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Matrix::from_rows(&refs)
}

pub fn max_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

pub fn random_mat<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-bound..bound)).collect())
        .collect()
}

fn cols(m: &Mat) -> usize {
    m.first().map_or(0, Vec::len)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let top = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub struct RefAttention {
    pub a: Mat,
    pub v: Mat,
}

/// `A[l][j] = softmax_j(sum_d U[l][d] tanh(sum_i W[d][i] H[i][j]))`,
/// `V[i][l] = sum_j H[i][j] A[l][j]`.
pub fn label_attention(w: &Mat, u: &Mat, h: &Mat) -> RefAttention {
    let (da, f, n, labels) = (w.len(), h.len(), cols(h), u.len());
    let mut z = vec![vec![0.0; n]; da];
    for d in 0..da {
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..f {
                s += w[d][i] * h[i][j];
            }
            z[d][j] = s.tanh();
        }
    }
    let mut a = vec![vec![0.0; n]; labels];
    for l in 0..labels {
        let scores: Vec<f64> = (0..n)
            .map(|j| (0..da).map(|d| u[l][d] * z[d][j]).sum())
            .collect();
        a[l] = softmax(&scores);
    }
    let mut v = vec![vec![0.0; labels]; f];
    for i in 0..f {
        for l in 0..labels {
            for j in 0..n {
                v[i][l] += h[i][j] * a[l][j];
            }
        }
    }
    RefAttention { a, v }
}

pub struct RefPartition {
    pub per_segment: Vec<RefAttention>,
    pub t: Mat,
    pub m: Mat,
    pub v_p: Mat,
}

pub fn partition_attention(w: &Mat, u: &Mat, h: &Mat, ranges: &[(usize, usize)], alpha: f64) -> RefPartition {
    let (da, f, labels) = (w.len(), h.len(), u.len());
    let n = ranges.len();
    let mut per_segment = Vec::new();
    let mut t = vec![vec![0.0; n]; labels];
    for (k, &(s, e)) in ranges.iter().enumerate() {
        let hk: Mat = h.iter().map(|row| row[s..e].to_vec()).collect();
        let out = label_attention(w, u, &hk);
        // Only the diagonal of U tanh(W V_k) is needed.
        for l in 0..labels {
            let mut score = 0.0;
            for d in 0..da {
                let mut wv = 0.0;
                for i in 0..f {
                    wv += w[d][i] * out.v[i][l];
                }
                score += u[l][d] * wv.tanh();
            }
            t[l][k] = alpha * score;
        }
        per_segment.push(out);
    }
    let m: Mat = t.iter().map(|row| softmax(row)).collect();
    let mut v_p = vec![vec![0.0; labels]; f];
    for i in 0..f {
        for l in 0..labels {
            for k in 0..n {
                v_p[i][l] += m[l][k] * per_segment[k].v[i][l];
            }
        }
    }
    RefPartition { per_segment, t, m, v_p }
}

pub fn equal_ranges(n_tokens: usize, n: usize) -> Vec<(usize, usize)> {
    let count = n.min(n_tokens);
    let (base, extra) = (n_tokens / count, n_tokens % count);
    let mut out = Vec::new();
    let mut start = 0;
    for k in 0..count {
        let size = base + usize::from(k < extra);
        out.push((start, start + size));
        start += size;
    }
    out
}

/// One LSTM direction over the columns of `x`, gates stacked i, f, g, o.
fn lstm_direction(x: &Mat, wi: &Mat, wh: &Mat, b: &Mat, reverse: bool) -> Mat {
    let n = cols(x);
    let u = wh[0].len();
    let mut out = vec![vec![0.0; n]; u];
    let mut h = vec![0.0; u];
    let mut c = vec![0.0; u];
    let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
    for t in order {
        let mut z = vec![0.0; 4 * u];
        for (k, zk) in z.iter_mut().enumerate() {
            let mut s = b[k][0];
            for (e, xe) in x.iter().enumerate() {
                s += wi[k][e] * xe[t];
            }
            for j in 0..u {
                s += wh[k][j] * h[j];
            }
            *zk = s;
        }
        for j in 0..u {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[u + j]);
            let g = z[2 * u + j].tanh();
            let o = sigmoid(z[3 * u + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
            out[j][t] = h[j];
        }
    }
    out
}

/// Logits of the whole model recomputed from its tensors with plain loops.
/// Assumes the trainable-embedding or frozen-projection encoder with
/// equal-width segments and no hidden head layer.
pub fn model_logits(model: &PaatModel, tokens: &[u32]) -> Vec<f64> {
    let cfg = &model.config;
    assert_eq!(cfg.head_hidden, 0);
    let get = |name: &str| to_rows(model.params.get(name).expect("tensor present"));
    let n_enc = match cfg.variant {
        Variant::NoPartitionEncoding | Variant::NoPartitionEither => 1,
        _ => cfg.n_enc,
    };
    let n_att = cfg.n_att.unwrap_or(cfg.n_enc);
    let partition_head = matches!(cfg.variant, Variant::Paat | Variant::NoPartitionEncoding | Variant::NoBiLstm) && n_att > 1;

    let table = get(params::TABLE);
    let n = tokens.len();
    let mut x: Mat = table
        .iter()
        .map(|row| tokens.iter().map(|&t| row[t as usize]).collect())
        .collect();
    if cfg.encoder_kind == paat::EncoderKind::TrainableEmbedding && cfg.gamma != 0.0 {
        for row in x.iter_mut() {
            let orig = row.clone();
            for (s, e) in equal_ranges(n, n_enc) {
                let mean = orig[s..e].iter().sum::<f64>() / (e - s) as f64;
                for v in &mut row[s..e] {
                    *v += cfg.gamma * mean;
                }
            }
        }
    }

    let h: Mat = if cfg.variant == Variant::NoBiLstm {
        let w = get(params::AFFINE_W);
        let b = get(params::AFFINE_B);
        (0..w.len())
            .map(|r| {
                (0..n)
                    .map(|j| b[r][0] + (0..x.len()).map(|e| w[r][e] * x[e][j]).sum::<f64>())
                    .collect()
            })
            .collect()
    } else {
        let [fi, fh, fb] = params::LSTM_FWD.map(get);
        let [bi, bh, bb] = params::LSTM_BWD.map(get);
        let mut h = lstm_direction(&x, &fi, &fh, &fb, false);
        h.extend(lstm_direction(&x, &bi, &bh, &bb, true));
        h
    };

    let w = get(params::ATT_W);
    let u = get(params::ATT_U);
    let conv = label_attention(&w, &u, &h);
    let mut feats = conv.v;
    if partition_head {
        let part = partition_attention(&w, &u, &h, &equal_ranges(n, n_att), cfg.alpha);
        feats.extend(part.v_p);
    }
    let hw = get(params::HEAD_W);
    let hb = get(params::HEAD_B);
    (0..cfg.labels)
        .map(|l| hb[0][l] + (0..feats.len()).map(|i| hw[i][l] * feats[i][l]).sum::<f64>())
        .collect()
}

/// AUC by counting every positive/negative pair.
pub fn auc_pairs(scores: &[f64], pos: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if pos[i] && !pos[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// `(tp, fp, fn)` over the cells selected by `keep`.
pub fn count_cells(pred: &[Vec<bool>], gold: &[Vec<bool>], keep: impl Fn(usize, usize) -> bool) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for d in 0..pred.len() {
        for l in 0..pred[d].len() {
            if !keep(d, l) {
                continue;
            }
            match (pred[d][l], gold[d][l]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    (tp, fp, fn_)
}

pub fn safe_ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Top-k by repeatedly taking the highest remaining score, lowest index
/// first among ties.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; scores.len()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for l in 0..scores.len() {
            if taken[l] {
                continue;
            }
            if best.is_none_or(|b| scores[l] > scores[b]) {
                best = Some(l);
            }
        }
        let b = best.expect("k <= labels");
        taken[b] = true;
        out.push(b);
    }
    out
}
