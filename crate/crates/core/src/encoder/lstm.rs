//! Bidirectional LSTM as a single fused tape op.
//!
//! Gate blocks are stacked in the order input, forget, cell, output, so each
//! direction holds `w_input: 4u x e`, `w_hidden: 4u x u` and `bias: 4u x 1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid, CustomOp, Matrix, NodeId, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Matrix,
}

impl LstmDirection {
    pub fn hidden(&self) -> usize {
        self.w_hidden.cols()
    }

    fn validate(&self, input_dim: usize) -> Result<()> {
        let u = self.hidden();
        if self.w_hidden.shape() != (4 * u, u) {
            return Err(Error::shape("lstm w_hidden", self.w_hidden.shape(), (4 * u, u)));
        }
        if self.w_input.shape() != (4 * u, input_dim) {
            return Err(Error::shape("lstm w_input", self.w_input.shape(), (4 * u, input_dim)));
        }
        if self.bias.shape() != (4 * u, 1) {
            return Err(Error::shape("lstm bias", self.bias.shape(), (4 * u, 1)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

impl BiLstmParams {
    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.w_input.cols()
    }
}

/// Tape handles for the six bi-LSTM tensors.
#[derive(Debug, Clone, Copy)]
pub struct BiLstmNodes {
    pub forward: [NodeId; 3],
    pub backward: [NodeId; 3],
}

struct DirCache {
    /// Activated gates per position, `N x 4u`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hidden: Vec<f64>,
}

fn run_direction(xt: &Matrix, dir: &LstmDirection, reverse: bool) -> DirCache {
    let n = xt.rows();
    let u = dir.hidden();
    let g4 = 4 * u;
    let proj = xt.matmul_nt(&dir.w_input).expect("validated shapes");
    let mut cache = DirCache {
        gates: vec![0.0; n * g4],
        cells: vec![0.0; n * u],
        tanh_cells: vec![0.0; n * u],
        hidden: vec![0.0; n * u],
    };
    let zero = vec![0.0; u];
    let mut z = vec![0.0; g4];
    for step in 0..n {
        let t = if reverse { n - 1 - step } else { step };
        let prev = if step == 0 {
            None
        } else if reverse {
            Some(t + 1)
        } else {
            Some(t - 1)
        };
        let (h_prev, c_prev): (Vec<f64>, Vec<f64>) = match prev {
            Some(p) => (
                cache.hidden[p * u..(p + 1) * u].to_vec(),
                cache.cells[p * u..(p + 1) * u].to_vec(),
            ),
            None => (zero.clone(), zero.clone()),
        };
        let p_row = proj.row(t);
        for k in 0..g4 {
            z[k] = p_row[k] + dir.bias.data()[k] + dot(dir.w_hidden.row(k), &h_prev);
        }
        let gates = &mut cache.gates[t * g4..(t + 1) * g4];
        for j in 0..u {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[u + j]);
            let g = z[2 * u + j].tanh();
            let o = sigmoid(z[3 * u + j]);
            gates[j] = i;
            gates[u + j] = f;
            gates[2 * u + j] = g;
            gates[3 * u + j] = o;
            let c = f * c_prev[j] + i * g;
            let tc = c.tanh();
            cache.cells[t * u + j] = c;
            cache.tanh_cells[t * u + j] = tc;
            cache.hidden[t * u + j] = o * tc;
        }
    }
    cache
}

/// Returns `(d w_input, d w_hidden, d bias, d x^T)` for one direction.
fn backprop_direction(
    xt: &Matrix,
    dir: &LstmDirection,
    cache: &DirCache,
    d_hidden: &[f64],
    reverse: bool,
) -> (Matrix, Matrix, Matrix, Matrix) {
    let n = xt.rows();
    let u = dir.hidden();
    let g4 = 4 * u;
    let mut dz_all = vec![0.0; n * g4];
    let mut dw_hidden = vec![0.0; g4 * u];
    let mut d_bias = vec![0.0; g4];
    let mut dh_rec = vec![0.0; u];
    let mut dc_rec = vec![0.0; u];
    for step in (0..n).rev() {
        let t = if reverse { n - 1 - step } else { step };
        let prev = if step == 0 {
            None
        } else if reverse {
            Some(t + 1)
        } else {
            Some(t - 1)
        };
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        let dz = &mut dz_all[t * g4..(t + 1) * g4];
        for j in 0..u {
            let (i, f, g, o) = (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
            let tc = cache.tanh_cells[t * u + j];
            let c_prev = prev.map_or(0.0, |p| cache.cells[p * u + j]);
            let dh = d_hidden[t * u + j] + dh_rec[j];
            let dc = dh * o * (1.0 - tc * tc) + dc_rec[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[u + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * u + j] = dc * i * (1.0 - g * g);
            dz[3 * u + j] = dh * tc * o * (1.0 - o);
            dc_rec[j] = dc * f;
        }
        dh_rec.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..g4 {
            let dzk = dz[k];
            d_bias[k] += dzk;
            if dzk == 0.0 {
                continue;
            }
            let w_row = dir.w_hidden.row(k);
            for j in 0..u {
                dh_rec[j] += w_row[j] * dzk;
            }
            if let Some(p) = prev {
                let h_prev = &cache.hidden[p * u..(p + 1) * u];
                let dw_row = &mut dw_hidden[k * u..(k + 1) * u];
                for j in 0..u {
                    dw_row[j] += dzk * h_prev[j];
                }
            }
        }
    }
    let dz = Matrix::from_vec_unchecked(n, g4, dz_all);
    let dw_input = dz.matmul_tn(xt).expect("shapes");
    let dxt = dz.matmul(&dir.w_input).expect("shapes");
    (
        dw_input,
        Matrix::from_vec_unchecked(g4, u, dw_hidden),
        Matrix::from_vec_unchecked(g4, 1, d_bias),
        dxt,
    )
}

struct BiLstmOp {
    params: BiLstmParams,
    xt: Matrix,
    forward: DirCache,
    backward: DirCache,
}

impl CustomOp for BiLstmOp {
    fn name(&self) -> &'static str {
        "bilstm"
    }

    fn backward(&self, _inputs: &[&Matrix], _output: &Matrix, grad: &Matrix) -> Vec<Option<Matrix>> {
        let u = self.params.hidden();
        let n = self.xt.rows();
        // grad is 2u x N; split into per-direction N x u blocks.
        let gt = grad.transpose();
        let mut d_fwd = Vec::with_capacity(n * u);
        let mut d_bwd = Vec::with_capacity(n * u);
        for t in 0..n {
            let row = gt.row(t);
            d_fwd.extend_from_slice(&row[..u]);
            d_bwd.extend_from_slice(&row[u..]);
        }
        let (fwi, fwh, fb, fdx) = backprop_direction(&self.xt, &self.params.forward, &self.forward, &d_fwd, false);
        let (bwi, bwh, bb, bdx) = backprop_direction(&self.xt, &self.params.backward, &self.backward, &d_bwd, true);
        let dx = fdx.add(&bdx).expect("shapes").transpose();
        vec![
            Some(dx),
            Some(fwi),
            Some(fwh),
            Some(fb),
            Some(bwi),
            Some(bwh),
            Some(bb),
        ]
    }
}

fn compute(params: &BiLstmParams, x: &Matrix) -> Result<(Matrix, BiLstmOp)> {
    let e = x.rows();
    params.forward.validate(e)?;
    params.backward.validate(e)?;
    if params.backward.hidden() != params.forward.hidden() {
        return Err(Error::Contract("bi-LSTM directions disagree on hidden size".into()));
    }
    let u = params.hidden();
    let n = x.cols();
    let xt = x.transpose();
    let fwd = run_direction(&xt, &params.forward, false);
    let bwd = run_direction(&xt, &params.backward, true);
    let mut out = Matrix::zeros(2 * u, n);
    for j in 0..u {
        for t in 0..n {
            out.set(j, t, fwd.hidden[t * u + j]);
            out.set(u + j, t, bwd.hidden[t * u + j]);
        }
    }
    let op = BiLstmOp {
        params: params.clone(),
        xt,
        forward: fwd,
        backward: bwd,
    };
    Ok((out, op))
}

/// Records the bi-LSTM over `x` (`e x N`) and returns the `2u x N` output.
/// Column `t` is the forward hidden state at `t` stacked on the backward one.
pub fn bilstm_on_tape(tape: &mut Tape, x: NodeId, nodes: &BiLstmNodes) -> Result<NodeId> {
    let dir = |tape: &Tape, ids: &[NodeId; 3]| LstmDirection {
        w_input: tape.value(ids[0]).clone(),
        w_hidden: tape.value(ids[1]).clone(),
        bias: tape.value(ids[2]).clone(),
    };
    let params = BiLstmParams {
        forward: dir(tape, &nodes.forward),
        backward: dir(tape, &nodes.backward),
    };
    let (out, op) = compute(&params, tape.value(x))?;
    let inputs = [
        x,
        nodes.forward[0],
        nodes.forward[1],
        nodes.forward[2],
        nodes.backward[0],
        nodes.backward[1],
        nodes.backward[2],
    ];
    Ok(tape.custom(&inputs, out, Box::new(op)))
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Matrix {
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Matrix::from_vec_unchecked(rows, cols, data)
}

/// Plain bi-LSTM forward on `x` (`e x N`). Dropout is applied to the output
/// only when `rng` is given and `dropout_rate > 0`.
pub fn bilstm_forward<R: Rng + ?Sized>(
    params: &BiLstmParams,
    x: &Matrix,
    dropout_rate: f64,
    rng: Option<&mut R>,
) -> Result<Matrix> {
    let (out, _) = compute(params, x)?;
    match rng {
        Some(rng) if dropout_rate > 0.0 => {
            let mask = dropout_mask(out.rows(), out.cols(), dropout_rate, rng);
            out.mul(&mask)
        }
        _ => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dir(e: usize, u: usize, rng: &mut ChaCha8Rng) -> LstmDirection {
        LstmDirection {
            w_input: Matrix::random_uniform(4 * u, e, 0.8, rng),
            w_hidden: Matrix::random_uniform(4 * u, u, 0.8, rng),
            bias: Matrix::random_uniform(4 * u, 1, 0.8, rng),
        }
    }

    fn zero_dir(e: usize, u: usize) -> LstmDirection {
        LstmDirection {
            w_input: Matrix::zeros(4 * u, e),
            w_hidden: Matrix::zeros(4 * u, u),
            bias: Matrix::zeros(4 * u, 1),
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let params = BiLstmParams {
            forward: zero_dir(2, 3),
            backward: zero_dir(2, 3),
        };
        let x = Matrix::random_uniform(2, 5, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let out = bilstm_forward::<ChaCha8Rng>(&params, &x, 0.0, None).unwrap();
        assert_eq!(out, Matrix::zeros(6, 5));
    }

    #[test]
    fn single_step_directions_are_independent_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = BiLstmParams {
            forward: random_dir(2, 3, &mut rng),
            backward: random_dir(2, 3, &mut rng),
        };
        let x = Matrix::random_uniform(2, 1, 1.0, &mut rng);
        let out = bilstm_forward::<ChaCha8Rng>(&params, &x, 0.0, None).unwrap();
        for (dir, offset) in [(&params.forward, 0), (&params.backward, 3)] {
            let z = dir.w_input.matmul(&x).unwrap().add(&dir.bias).unwrap();
            for j in 0..3 {
                let c = sigmoid(z.get(j, 0)) * z.get(6 + j, 0).tanh();
                let h = sigmoid(z.get(9 + j, 0)) * c.tanh();
                assert!((out.get(offset + j, 0) - h).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let params = BiLstmParams {
            forward: zero_dir(2, 3),
            backward: zero_dir(2, 3),
        };
        let x = Matrix::zeros(4, 2);
        assert!(matches!(
            bilstm_forward::<ChaCha8Rng>(&params, &x, 0.0, None),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn dropout_mask_is_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = dropout_mask(50, 50, 0.3, &mut rng);
        let keep = 1.0 / 0.7;
        assert!(m.data().iter().all(|&v| v == 0.0 || v == keep));
        let mean = m.sum() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }
}
