//! Linear constraint machinery: hyperplane parameterization of V, a linear
//! system on vec(W), the constrained closed-form W, feedforward masks, and
//! verification of a supplied sign certificate.

use crate::activation::{self, ActivationSpec};
use crate::error::{Error, Result};
use crate::matrix::{Cond, Matrix};
use crate::scalar::Scalar;

/// Hyperplane basis for V: either the full space or an explicit column basis
/// (zero columns pin V to V0 entirely).
#[derive(Clone, Debug)]
pub enum NSpec<T> {
    Identity,
    Explicit(Matrix<T>),
}

/// Immutable constraint set: V = N Vr + V0 and R vec(W) = r, with the derived
/// projector P = I - R'(RR')^-1 R and particular solution W2 cached.
#[derive(Clone, Debug)]
pub struct ConstraintSet<T> {
    pub n_spec: NSpec<T>,
    pub v0: Matrix<T>,
    pub r_mat: Matrix<T>,
    pub r_vec: Matrix<T>,
    pub n_neurons: usize,
    p: Matrix<T>,
    w2: Matrix<T>,
}

impl<T: Scalar> ConstraintSet<T> {
    pub fn build(
        n_spec: NSpec<T>,
        v0: Matrix<T>,
        r_mat: Matrix<T>,
        r_vec: Matrix<T>,
    ) -> Result<Self> {
        let mm = r_mat.cols();
        let m = (mm as f64).sqrt().round() as usize;
        if m * m != mm {
            return Err(Error::ShapeMismatch(format!(
                "R must have n_neurons^2 columns, got {mm}"
            )));
        }
        let q = r_mat.rows();
        if r_vec.rows() != q || r_vec.cols() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "r must be {}x1, got {}x{}",
                q,
                r_vec.rows(),
                r_vec.cols()
            )));
        }
        if let NSpec::Explicit(n) = &n_spec {
            if n.rows() != v0.rows() {
                return Err(Error::ShapeMismatch(format!(
                    "N has {} rows but V0 has {}",
                    n.rows(),
                    v0.rows()
                )));
            }
        }
        if v0.cols() != m {
            return Err(Error::ShapeMismatch(format!(
                "V0 must have {} columns, got {}",
                m,
                v0.cols()
            )));
        }

        let (p, w2) = if q == 0 {
            (Matrix::identity(mm), Matrix::zeros(m, m))
        } else {
            if r_mat.rank() < q {
                return Err(Error::RankDeficientR);
            }
            let rrt = r_mat.matmul(&r_mat.transpose());
            // (RR')^-1 R and (RR')^-1 r via one factorization context
            let rrt_inv_r = Matrix::lu_solve(&rrt, &r_mat, "RR'")?;
            let rrt_inv_rvec = Matrix::lu_solve(&rrt, &r_vec, "RR'")?;
            let p = Matrix::identity(mm).sub(&r_mat.transpose().matmul(&rrt_inv_r));
            let w2v = r_mat.transpose().matmul(&rrt_inv_rvec);
            let w2 = Matrix::unvec_col(&w2v, m, m);
            let tol = T::c(1e-10);
            let scale = T::one() + r_vec.frob_norm();
            if p.matmul(&p).sub(&p).frob_norm() > tol
                || p.transpose().sub(&p).frob_norm() > tol
            {
                return Err(Error::Singular("projector P from R is ill-conditioned".into()));
            }
            if r_mat.matmul(&w2v).sub(&r_vec).frob_norm() > tol * scale {
                return Err(Error::Singular("particular solution W2 from R".into()));
            }
            (p, w2)
        };
        Ok(ConstraintSet {
            n_spec,
            v0,
            r_mat,
            r_vec,
            n_neurons: m,
            p,
            w2,
        })
    }

    /// Unconstrained recovery: empty R, N = I, V0 = 0.
    pub fn empty(n_in: usize, n_neurons: usize) -> Self {
        Self::build(
            NSpec::Identity,
            Matrix::zeros(n_in, n_neurons),
            Matrix::zeros(0, n_neurons * n_neurons),
            Matrix::zeros(0, 1),
        )
        .expect("empty constraint set always builds")
    }

    pub fn projector_p(&self) -> &Matrix<T> {
        &self.p
    }

    pub fn w2(&self) -> &Matrix<T> {
        &self.w2
    }

    pub fn w2_frob(&self) -> T {
        self.w2.frob_norm()
    }

    pub fn is_feasible(&self, theta_w: T) -> bool {
        self.w2_frob() < T::one() / theta_w
    }

    /// Orthogonal projector onto col(N), as an n_in x n_in matrix.
    pub fn projector_n(&self, n_in: usize) -> Matrix<T> {
        match &self.n_spec {
            NSpec::Identity => Matrix::identity(n_in),
            NSpec::Explicit(n) => {
                if n.cols() == 0 {
                    Matrix::zeros(n_in, n_in)
                } else {
                    n.matmul(&n.pinv())
                }
            }
        }
    }

    /// True when the set reduces to the unconstrained problem.
    pub fn is_trivial(&self) -> bool {
        self.r_mat.rows() == 0
            && matches!(self.n_spec, NSpec::Identity)
            && self.v0.frob_norm() == T::zero()
    }
}

/// Constrained closed-form weight recovery:
/// W = (1/theta_W) ((1 - theta_W^2 ||W2||_F^2) / (1 + ||W1||_F^2))^(1/2) W1 + W2
/// with W1 the P-projection of F(U)'mu.
pub fn constrained_w<T: Scalar>(
    u: &Matrix<T>,
    mu: &Matrix<T>,
    theta_w: T,
    cs: &ConstraintSet<T>,
    act: &ActivationSpec,
) -> Result<Matrix<T>> {
    let w2n = cs.w2_frob();
    if w2n >= T::one() / theta_w {
        return Err(Error::InfeasibleConstraints {
            w2_norm: w2n.to_f64().unwrap_or(f64::NAN),
            limit: (T::one() / theta_w).to_f64().unwrap_or(f64::NAN),
        });
    }
    let m = cs.n_neurons;
    let ftmu = activation::f_matrix(act, u)?.transpose().matmul(mu);
    let w1 = Matrix::unvec_col(&cs.projector_p().matmul(&ftmu.vec_col()), m, m);
    let w1n2 = w1.frob_norm().powi(2);
    let factor =
        ((T::one() - theta_w * theta_w * w2n * w2n) / (T::one() + w1n2)).sqrt() / theta_w;
    Ok(w1.scale(factor).add(cs.w2()))
}

/// R, r = 0 pinning every W entry except those linking one layer to the next.
/// Neurons are indexed layer by layer; entry (i, j) is the connection from
/// neuron i to neuron j.
pub fn fnn_mask_constraints<T: Scalar>(layer_sizes: &[usize]) -> (Matrix<T>, Matrix<T>) {
    assert!(!layer_sizes.is_empty(), "need at least one layer");
    assert!(layer_sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
    let m: usize = layer_sizes.iter().sum();
    let mut starts = Vec::with_capacity(layer_sizes.len());
    let mut acc = 0;
    for &s in layer_sizes {
        starts.push(acc);
        acc += s;
    }
    let layer_of = |i: usize| -> usize {
        starts
            .iter()
            .rposition(|&s| s <= i)
            .expect("index within total neuron count")
    };
    let mut pinned = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if layer_of(i) + 1 != layer_of(j) {
                pinned.push((i, j));
            }
        }
    }
    let mut r = Matrix::zeros(pinned.len(), m * m);
    for (row, &(i, j)) in pinned.iter().enumerate() {
        r[(row, j * m + i)] = T::one(); // column-major vec index
    }
    let rvec = Matrix::zeros(pinned.len(), 1);
    (r, rvec)
}

/// Certificate verification report.
#[derive(Clone, Copy, Debug)]
pub struct OmegaReport<T> {
    pub invertible: bool,
    pub left_ok: bool,
    pub right_ok: bool,
    pub kappa: T,
}

/// Checks that Omega is invertible and that Omega W and W Omega are entrywise
/// nonnegative (to rounding tolerance).
pub fn verify_omega<T: Scalar>(omega: &Matrix<T>, w: &Matrix<T>) -> Result<OmegaReport<T>> {
    if !omega.is_square() || !w.is_square() || omega.rows() != w.rows() {
        return Err(Error::ShapeMismatch(
            "verify_omega needs square matrices of equal size".into(),
        ));
    }
    let cond = omega.condition_number()?;
    let invertible = !cond.is_singular();
    let tol = -T::c(1e-12);
    let entrywise_nonneg =
        |m: &Matrix<T>| -> bool { m.data().iter().all(|&x| x >= tol) };
    let left_ok = entrywise_nonneg(&omega.matmul(w));
    let right_ok = entrywise_nonneg(&w.matmul(omega));
    let kappa = match cond {
        Cond::Finite(v) => v,
        Cond::Singular => T::infinity(),
    };
    Ok(OmegaReport {
        invertible,
        left_ok,
        right_ok,
        kappa,
    })
}

/// V recovery under the hyperplane parameterization:
/// Vr solves theta_V N'(N Vr + V0) = N'X'mu, then V = N Vr + V0.
pub fn recover_v_constrained<T: Scalar>(
    x: &Matrix<T>,
    mu: &Matrix<T>,
    theta_v: T,
    cs: &ConstraintSet<T>,
) -> Result<Matrix<T>> {
    let xtmu = x.transpose().matmul(mu).scale(T::one() / theta_v);
    match &cs.n_spec {
        NSpec::Identity => Ok(xtmu),
        NSpec::Explicit(n) => {
            if n.cols() == 0 {
                return Ok(cs.v0.clone());
            }
            // pinv(N) = (N'N)^-1 N' for full column rank; least squares otherwise
            let vr = n.pinv().matmul(&xtmu.sub(&cs.v0));
            Ok(n.matmul(&vr).add(&cs.v0))
        }
    }
}
