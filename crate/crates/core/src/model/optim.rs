use crate::error::{Error, Result};
use crate::model::params::ParamStore;
use crate::model::TrainConfig;
use crate::numerics::Matrix;

/// Decoupled-weight-decay Adam. The update for a parameter `p` is
/// `p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    state: OptimizerState,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: &TrainConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.value.len()]).collect();
        AdamW {
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            weight_decay: config.weight_decay,
            state: OptimizerState {
                step: 0,
                m: zeros.clone(),
                v: zeros,
            },
        }
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// One update. `grads[i]` belongs to tensor `i`; frozen tensors and
    /// `None` entries are left alone. Any non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Matrix>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} tensors",
                grads.len(),
                params.len()
            )));
        }
        for (t, g) in params.tensors().iter().zip(grads) {
            if let Some(g) = g {
                if g.shape() != t.value.shape() {
                    return Err(Error::shape("optimizer step", t.value.shape(), g.shape()));
                }
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {}", t.name)));
                }
            }
        }
        self.state.step += 1;
        let step = self.state.step as i32;
        let c1 = 1.0 - self.beta1.powi(step);
        let c2 = 1.0 - self.beta2.powi(step);
        for (i, (t, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            if !t.trainable {
                continue;
            }
            let m = &mut self.state.m[i];
            let v = &mut self.state.v[i];
            for (((p, &g), m), v) in t.value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * *p);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PaatConfig;

    fn store() -> ParamStore {
        ParamStore::init(&store_config())
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = store();
        let before = p.value(0).clone();
        let cfg = TrainConfig {
            weight_decay: 0.0,
            lr: 0.01,
            ..TrainConfig::default()
        };
        let mut opt = AdamW::new(&cfg, &p);
        let mut grads: Vec<Option<Matrix>> = vec![None; p.len()];
        grads[0] = Some(Matrix::filled(before.rows(), before.cols(), -3.0));
        opt.step(&mut p, &grads).unwrap();
        // With bias correction the first step is lr * g / (|g| + eps).
        for (a, b) in p.value(0).data().iter().zip(before.data()) {
            assert!((a - b - 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        }
        assert_eq!(p.value(1), store().value(1));
    }

    fn store_config() -> PaatConfig {
        PaatConfig {
            vocab_size: 5,
            labels: 2,
            embed_dim: 2,
            hidden: 1,
            attn_dim: 1,
            ..PaatConfig::default()
        }
    }

    #[test]
    fn weight_decay_shrinks_without_gradient_signal() {
        let mut p = store();
        let before = p.value(0).clone();
        let cfg = TrainConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..TrainConfig::default()
        };
        let mut opt = AdamW::new(&cfg, &p);
        let mut grads: Vec<Option<Matrix>> = vec![None; p.len()];
        grads[0] = Some(Matrix::zeros(before.rows(), before.cols()));
        opt.step(&mut p, &grads).unwrap();
        for (a, b) in p.value(0).data().iter().zip(before.data()) {
            assert!((a - b * 0.95).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut p = store();
        let before = p.clone();
        let mut opt = AdamW::new(&TrainConfig::default(), &p);
        let mut grads: Vec<Option<Matrix>> = p.tensors().iter().map(|t| Some(Matrix::zeros(t.value.rows(), t.value.cols()))).collect();
        let mut bad = Matrix::zeros(p.value(2).rows(), p.value(2).cols());
        bad.set(0, 0, f64::NAN);
        grads[2] = Some(bad);
        assert!(matches!(opt.step(&mut p, &grads), Err(Error::NonFinite(_))));
        assert_eq!(p, before);
        assert_eq!(opt.state().step, 0);
    }
}
