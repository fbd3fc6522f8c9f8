//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

#[derive(Debug, Clone)]
pub struct GradEntry {
    pub name: String,
    pub analytic: Matrix,
    pub numeric: Matrix,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub entries: Vec<GradEntry>,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradReport {
    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Numeric gradient of `loss` at `params` by central differences with step
/// `h`. The loss must be deterministic.
pub fn numeric_gradient<F>(mut loss: F, params: &[Matrix], h: f64) -> Result<Vec<Matrix>>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {h}")));
    }
    let mut work: Vec<Matrix> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut grad = Matrix::zeros(params[t].rows(), params[t].cols());
        for i in 0..params[t].len() {
            let original = params[t].data()[i];
            work[t].data_mut()[i] = original + h;
            let plus = loss(&work)?;
            work[t].data_mut()[i] = original - h;
            let minus = loss(&work)?;
            work[t].data_mut()[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                let (r, c) = (i / params[t].cols(), i % params[t].cols());
                return Err(Error::NonFinite(format!(
                    "loss at perturbed coordinate ({r}, {c}) of tensor {t}: {plus} / {minus}"
                )));
            }
            grad.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Compares `analytic` gradients against central differences of `loss`.
pub fn finite_diff_check<F>(
    loss: F,
    names: &[String],
    params: &[Matrix],
    analytic: &[Matrix],
    h: f64,
    tol: f64,
) -> Result<GradReport>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if names.len() != params.len() || analytic.len() != params.len() {
        return Err(Error::Contract("names, params and gradients must align".into()));
    }
    for (p, a) in params.iter().zip(analytic) {
        if p.shape() != a.shape() {
            return Err(Error::shape("finite_diff_check", p.shape(), a.shape()));
        }
    }
    let numeric = numeric_gradient(loss, params, h)?;
    let entries: Vec<GradEntry> = names
        .iter()
        .zip(analytic)
        .zip(numeric)
        .map(|((name, a), n)| {
            let max_rel_error = a
                .data()
                .iter()
                .zip(n.data())
                .map(|(&x, &y)| relative_error(x, y))
                .fold(0.0, f64::max);
            GradEntry {
                name: name.clone(),
                analytic: a.clone(),
                numeric: n,
                max_rel_error,
            }
        })
        .collect();
    let pass = entries.iter().all(|e| e.max_rel_error <= tol);
    Ok(GradReport {
        entries,
        tolerance: tol,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = numeric_gradient(|p| Ok(p[0].get(0, 0).powi(2)), &[Matrix::scalar(3.0)], 1e-5).unwrap();
        assert!((g[0].get(0, 0) - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = numeric_gradient(|_| Ok(4.2), &[Matrix::zeros(2, 3)], 1e-5).unwrap();
        assert!(g[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_loss_names_coordinate() {
        let err = numeric_gradient(
            |p| Ok(if p[0].get(0, 1) > 0.5 { f64::NAN } else { 0.0 }),
            &[Matrix::row_vector(&[0.0, 0.5])],
            1e-3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(numeric_gradient(|_| Ok(0.0), &[Matrix::scalar(1.0)], 0.0).is_err());
    }

    #[test]
    fn relative_error_is_damped_near_zero() {
        assert_eq!(relative_error(1e-9, 0.0), 1e-9);
        assert!((relative_error(100.0, 101.0) - 1.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn report_flags_bad_gradient() {
        let r = finite_diff_check(
            |p| Ok(p[0].get(0, 0).powi(2)),
            &["x".to_string()],
            &[Matrix::scalar(3.0)],
            &[Matrix::scalar(5.0)],
            1e-5,
            1e-3,
        )
        .unwrap();
        assert!(!r.pass);
        assert!(r.worst().unwrap().max_rel_error > 0.1);
    }
}
