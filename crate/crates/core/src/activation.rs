//! Activation functions restricted to the admissible class: every registered
//! activation has a derivative in [0,1], so the elementwise map is
//! 1-Lipschitz and the forward equation stays a contraction for ||W|| < 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Softplus,
    Identity,
}

/// Named activation plus its sharpness parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl ActivationSpec {
    pub fn softplus(alpha: f64) -> Self {
        ActivationSpec {
            kind: ActivationKind::Softplus,
            alpha,
        }
    }

    pub fn identity() -> Self {
        ActivationSpec {
            kind: ActivationKind::Identity,
            alpha: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ActivationKind::Softplus if self.alpha <= 0.0 => Err(Error::InvalidActivation(
                format!("softplus requires alpha > 0, got {}", self.alpha),
            )),
            _ => Ok(()),
        }
    }
}

/// f(u). Softplus is (1/alpha) ln(1 + e^(alpha u)), computed overflow-safely.
pub fn act_eval<T: Scalar>(spec: &ActivationSpec, u: T) -> Result<T> {
    spec.validate()?;
    Ok(eval_unchecked(spec, u))
}

fn eval_unchecked<T: Scalar>(spec: &ActivationSpec, u: T) -> T {
    match spec.kind {
        ActivationKind::Identity => u,
        ActivationKind::Softplus => {
            let alpha = T::c(spec.alpha);
            let z = alpha * u;
            if z > T::zero() {
                // ln(1+e^z) = z + ln(1+e^-z) for the large-argument branch
                (z + (-z).exp().ln_1p()) / alpha
            } else {
                z.exp().ln_1p() / alpha
            }
        }
    }
}

/// f'(u), always in [0,1]. Softplus derivative is the sigmoid 1/(1+e^(-alpha u)).
pub fn act_deriv<T: Scalar>(spec: &ActivationSpec, u: T) -> Result<T> {
    spec.validate()?;
    Ok(deriv_unchecked(spec, u))
}

fn deriv_unchecked<T: Scalar>(spec: &ActivationSpec, u: T) -> T {
    match spec.kind {
        ActivationKind::Identity => T::one(),
        ActivationKind::Softplus => {
            let z = T::c(spec.alpha) * u;
            T::one() / (T::one() + (-z).exp())
        }
    }
}

/// Elementwise F(U) with one activation per column (neuron).
pub fn f_matrix_per_col<T: Scalar>(specs: &[ActivationSpec], u: &Matrix<T>) -> Result<Matrix<T>> {
    check_cols(specs, u)?;
    Ok(Matrix::from_fn(u.rows(), u.cols(), |i, j| {
        eval_unchecked(&specs[j], u[(i, j)])
    }))
}

/// Elementwise derivative matrix with one activation per column.
pub fn fdot_matrix_per_col<T: Scalar>(
    specs: &[ActivationSpec],
    u: &Matrix<T>,
) -> Result<Matrix<T>> {
    check_cols(specs, u)?;
    Ok(Matrix::from_fn(u.rows(), u.cols(), |i, j| {
        deriv_unchecked(&specs[j], u[(i, j)])
    }))
}

/// F(U) with a single activation for all neurons.
pub fn f_matrix<T: Scalar>(spec: &ActivationSpec, u: &Matrix<T>) -> Result<Matrix<T>> {
    spec.validate()?;
    Ok(u.map(|x| eval_unchecked(spec, x)))
}

/// Derivative matrix with a single activation for all neurons.
pub fn fdot_matrix<T: Scalar>(spec: &ActivationSpec, u: &Matrix<T>) -> Result<Matrix<T>> {
    spec.validate()?;
    Ok(u.map(|x| deriv_unchecked(spec, x)))
}

fn check_cols<T: Scalar>(specs: &[ActivationSpec], u: &Matrix<T>) -> Result<()> {
    if specs.len() != u.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} activations for {} columns",
            specs.len(),
            u.cols()
        )));
    }
    for s in specs {
        s.validate()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_at_zero() {
        let s = ActivationSpec::softplus(0.05);
        let got: f64 = act_eval(&s, 0.0).unwrap();
        assert!((got - 2.0f64.ln() / 0.05).abs() < 1e-12);
        assert!((got - 13.86294).abs() < 1e-4);
    }

    #[test]
    fn softplus_saturation_and_asymptote() {
        let s = ActivationSpec::softplus(0.05);
        let lo: f64 = act_eval(&s, -1e6).unwrap();
        assert!(lo.abs() < 1e-300);
        let hi: f64 = act_eval(&s, 1e6).unwrap();
        assert!((hi - 1e6).abs() / 1e6 < 1e-9);
    }

    #[test]
    fn nonpositive_alpha_rejected() {
        let s = ActivationSpec::softplus(0.0);
        assert!(act_eval(&s, 1.0f64).is_err());
        assert!(act_deriv(&s, 1.0f64).is_err());
    }

    #[test]
    fn deriv_values() {
        let s = ActivationSpec::softplus(0.7);
        assert!((act_deriv(&s, 0.0f64).unwrap() - 0.5).abs() < 1e-15);
        let id = ActivationSpec::identity();
        assert_eq!(act_deriv(&id, 7.3f64).unwrap(), 1.0);
    }

    #[test]
    fn deriv_matches_finite_difference() {
        let s = ActivationSpec::softplus(0.05);
        let u = 2.0f64;
        let h = 1e-5;
        let fd = (act_eval(&s, u + h).unwrap() - act_eval(&s, u - h).unwrap()) / (2.0 * h);
        assert!((act_deriv(&s, u).unwrap() - fd).abs() < 1e-7);
    }

    #[test]
    fn deriv_in_unit_interval_dense_sampling() {
        let s = ActivationSpec::softplus(0.05);
        for k in 0..10_000 {
            let u = -1e3 + (k as f64) * 0.2;
            let d: f64 = act_deriv(&s, u).unwrap();
            assert!((0.0..=1.0).contains(&d), "deriv {d} out of [0,1] at u={u}");
        }
    }

    #[test]
    fn lipschitz_one_on_sampled_pairs() {
        let s = ActivationSpec::softplus(0.3);
        for k in 0..500 {
            let u1 = -50.0 + (k as f64) * 0.21;
            let u2 = u1 + 3.7;
            let df = (act_eval(&s, u1).unwrap() - act_eval(&s, u2).unwrap()).abs();
            assert!(df <= (u1 - u2).abs() + 1e-12);
        }
    }

    #[test]
    fn matrix_application_commutes_with_transpose() {
        let s = ActivationSpec::softplus(0.4);
        let u = Matrix::from_rows(&[vec![0.1, -2.0, 3.0], vec![5.0, 0.0, -0.7]]);
        let a = f_matrix(&s, &u).unwrap().transpose();
        let b = f_matrix(&s, &u.transpose()).unwrap();
        assert_eq!(a, b);
        let a = fdot_matrix(&s, &u).unwrap().transpose();
        let b = fdot_matrix(&s, &u.transpose()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_column_list_length_checked() {
        let u = Matrix::<f64>::zeros(2, 3);
        let specs = vec![ActivationSpec::identity(); 2];
        assert!(f_matrix_per_col(&specs, &u).is_err());
        let specs = vec![ActivationSpec::identity(); 3];
        assert!(f_matrix_per_col(&specs, &u).is_ok());
    }
}
