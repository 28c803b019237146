//! The training engine: closed-form weight recovery, assembly of the
//! nonlinear right-hand sides, the partial solve of the reduced system, and
//! the damped contraction loop with its stopping rules.

use crate::activation::{self, ActivationSpec};
use crate::constraints::{self, ConstraintSet};
use crate::error::{Error, Result};
use crate::matrix::{woodbury_apply, Matrix};
use crate::model::{
    foc_residuals, ones_b, Dataset, FocReport, IterState, ModelConfig, ParamDeltaMetric, WeightSet,
};
use crate::scalar::Scalar;

/// Q = (1/theta_V) X X' held in factored form; applications route through the
/// n_in-sized factor so the n_obs x n_obs product is never materialized when
/// n_in < n_obs.
#[derive(Clone, Debug)]
pub struct QOperator<T> {
    x_eff: Matrix<T>,
    theta_v: T,
}

impl<T: Scalar> QOperator<T> {
    pub fn new(x: &Matrix<T>, theta_v: T) -> Self {
        QOperator {
            x_eff: x.clone(),
            theta_v,
        }
    }

    /// Constrained variant: Q = (1/theta_V) X P_N X' with P_N the projector
    /// onto col(N). P_N is idempotent, so X P_N serves as the factor.
    pub fn with_projector(x: &Matrix<T>, p_n: &Matrix<T>, theta_v: T) -> Self {
        QOperator {
            x_eff: x.matmul(p_n),
            theta_v,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.x_eff.rows()
    }

    /// Q M.
    pub fn apply(&self, m: &Matrix<T>) -> Matrix<T> {
        let inv_tv = T::one() / self.theta_v;
        if self.x_eff.cols() < self.x_eff.rows() {
            self.x_eff
                .matmul(&self.x_eff.transpose().matmul(m).scale(inv_tv))
        } else {
            self.x_eff
                .matmul(&self.x_eff.transpose())
                .scale(inv_tv)
                .matmul(m)
        }
    }

    /// (I + s Q)^-1 M through the Woodbury identity.
    pub fn inv_damped_apply(&self, s: T, m: &Matrix<T>) -> Result<Matrix<T>> {
        woodbury_apply(&self.x_eff, s / self.theta_v, m)
    }

    /// Spectral norm of Q.
    pub fn norm(&self) -> Result<T> {
        let sx = self.x_eff.spectral_norm()?;
        Ok(sx * sx / self.theta_v)
    }

    /// Dense Q, for diagnostics and test oracles.
    pub fn to_dense(&self) -> Matrix<T> {
        self.x_eff
            .matmul(&self.x_eff.transpose())
            .scale(T::one() / self.theta_v)
    }
}

/// Closed-form stationary W: W = (1/theta_W) F(U)'mu / (1 + ||F(U)'mu||_F^2)^(1/2).
/// The result always satisfies ||W||_F < 1/theta_W strictly.
pub fn closed_form_w<T: Scalar>(
    u: &Matrix<T>,
    mu: &Matrix<T>,
    theta_w: T,
    act: &ActivationSpec,
) -> Result<Matrix<T>> {
    let g = activation::f_matrix(act, u)?.transpose().matmul(mu);
    let denom = (T::one() + g.frob_norm().powi(2)).sqrt();
    Ok(g.scale(T::one() / (theta_w * denom)))
}

/// Right-hand sides of the reduced system:
/// B1 = 1b' + F(U) W and B2 = Y beta' + Fdot(U) o (mu W').
pub fn assemble_b<T: Scalar>(
    u: &Matrix<T>,
    mu: &Matrix<T>,
    w: &Matrix<T>,
    b: &Matrix<T>,
    y: &Matrix<T>,
    beta: &Matrix<T>,
    act: &ActivationSpec,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if u.rows() != mu.rows() || u.cols() != mu.cols() {
        return Err(Error::ShapeMismatch(format!(
            "U is {}x{} but mu is {}x{}",
            u.rows(),
            u.cols(),
            mu.rows(),
            mu.cols()
        )));
    }
    if w.rows() != u.cols() || !w.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "W must be {0}x{0}, got {1}x{2}",
            u.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let fu = activation::f_matrix(act, u)?;
    let fdot = activation::fdot_matrix(act, u)?;
    let b1 = ones_b(u.rows(), b).add(&fu.matmul(w));
    let b2 = y
        .matmul(&beta.transpose())
        .add(&fdot.hadamard(&mu.matmul(&w.transpose())));
    Ok((b1, b2))
}

/// Constrained assembly: B1 gains the X (I - P_N) V0 offset and Q is built
/// on the projected design matrix.
pub fn constrained_assemble<T: Scalar>(
    u: &Matrix<T>,
    mu: &Matrix<T>,
    w: &Matrix<T>,
    data: &Dataset<T>,
    config: &ModelConfig<T>,
    cs: &ConstraintSet<T>,
) -> Result<(Matrix<T>, Matrix<T>, QOperator<T>)> {
    let n_in = data.n_in();
    let p_n = cs.projector_n(n_in);
    let (b1_plain, b2) = assemble_b(u, mu, w, &config.b, &data.y, &config.beta, &config.activation)?;
    let offset = data
        .x
        .matmul(&Matrix::identity(n_in).sub(&p_n))
        .matmul(&cs.v0);
    let q = QOperator::with_projector(&data.x, &p_n, config.theta_v);
    Ok((b1_plain.add(&offset), b2, q))
}

/// Solves the linearized pair U = Q mu + B1, mu = -U beta beta' + B2 in
/// closed form, with every (I + beta'beta Q)^-1 application routed through
/// the Woodbury identity.
pub fn partial_solve<T: Scalar>(
    b1: &Matrix<T>,
    b2: &Matrix<T>,
    q: &QOperator<T>,
    beta: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let bbt = beta.matmul(&beta.transpose());
    let btb = beta.transpose().matmul(beta)[(0, 0)];
    let d1 = b1.add(&q.apply(b2));
    let d2 = b2.sub(&b1.matmul(&bbt));
    let solve_one = |d: &Matrix<T>| -> Result<Matrix<T>> {
        let qd = q.apply(d);
        let inv_qd = q.inv_damped_apply(btb, &qd)?;
        Ok(d.sub(&inv_qd.matmul(&bbt)))
    };
    Ok((solve_one(&d1)?, solve_one(&d2)?))
}

/// Ridge stationarity in V: V = X'mu / theta_V.
pub fn recover_v<T: Scalar>(x: &Matrix<T>, mu: &Matrix<T>, theta_v: T) -> Matrix<T> {
    x.transpose().matmul(mu).scale(T::one() / theta_v)
}

/// One damped update T(U, mu) = (1-delta)(U, mu) + delta (U_B, mu_B).
pub fn contraction_step<T: Scalar>(
    state: &IterState<T>,
    delta: T,
    data: &Dataset<T>,
    config: &ModelConfig<T>,
    constraints: Option<&ConstraintSet<T>>,
) -> Result<IterState<T>> {
    let (u_b, mu_b) = step_target(state, data, config, constraints)?;
    let keep = T::one() - delta;
    Ok(IterState {
        u: state.u.scale(keep).add(&u_b.scale(delta)),
        mu: state.mu.scale(keep).add(&mu_b.scale(delta)),
    })
}

fn step_target<T: Scalar>(
    state: &IterState<T>,
    data: &Dataset<T>,
    config: &ModelConfig<T>,
    constraints: Option<&ConstraintSet<T>>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let act = &config.activation;
    match constraints {
        Some(cs) => {
            let w = constraints::constrained_w(&state.u, &state.mu, config.theta_w, cs, act)?;
            let (b1, b2, q) = constrained_assemble(&state.u, &state.mu, &w, data, config, cs)?;
            partial_solve(&b1, &b2, &q, &config.beta)
        }
        None => {
            let w = closed_form_w(&state.u, &state.mu, config.theta_w, act)?;
            let (b1, b2) =
                assemble_b(&state.u, &state.mu, &w, &config.b, &data.y, &config.beta, act)?;
            let q = QOperator::new(&data.x, config.theta_v);
            partial_solve(&b1, &b2, &q, &config.beta)
        }
    }
}

/// Outcome of a training run.
#[derive(Clone, Debug)]
pub struct TrainResult<T> {
    pub weights: WeightSet<T>,
    pub state: IterState<T>,
    pub iterations: usize,
    pub sse_trace: Vec<T>,
    pub param_delta_trace: Vec<T>,
    pub converged: bool,
    pub foc_report: FocReport<T>,
}

fn weights_at<T: Scalar>(
    state: &IterState<T>,
    data: &Dataset<T>,
    config: &ModelConfig<T>,
    constraints: Option<&ConstraintSet<T>>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    match constraints {
        Some(cs) => {
            let w = constraints::constrained_w(
                &state.u,
                &state.mu,
                config.theta_w,
                cs,
                &config.activation,
            )?;
            let v = constraints::recover_v_constrained(&data.x, &state.mu, config.theta_v, cs)?;
            Ok((w, v))
        }
        None => {
            let w = closed_form_w(&state.u, &state.mu, config.theta_w, &config.activation)?;
            let v = recover_v(&data.x, &state.mu, config.theta_v);
            Ok((w, v))
        }
    }
}

/// Iterates the damped contraction from U0 = 1b', mu0 = (Y - U0 beta) beta'
/// until the squared parameter delta falls below `outer_tol` or the
/// iteration cap is hit. Deterministic for identical inputs.
pub fn train<T: Scalar>(
    data: &Dataset<T>,
    config: &ModelConfig<T>,
    constraints: Option<&ConstraintSet<T>>,
) -> Result<TrainResult<T>> {
    config.validate()?;
    if let Some(cs) = constraints {
        if cs.n_neurons != config.n_neurons {
            return Err(Error::ShapeMismatch(format!(
                "constraint set is for {} neurons, config has {}",
                cs.n_neurons, config.n_neurons
            )));
        }
        if cs.v0.rows() != data.n_in() {
            return Err(Error::ShapeMismatch(format!(
                "V0 has {} rows but the design matrix has {} columns",
                cs.v0.rows(),
                data.n_in()
            )));
        }
    }
    let u0 = ones_b(data.n_obs(), &config.b);
    let mu0 = data
        .y
        .sub(&u0.matmul(&config.beta))
        .matmul(&config.beta.transpose());
    let mut state = IterState { u: u0, mu: mu0 };
    let (mut w_prev, mut v_prev) = weights_at(&state, data, config, constraints)?;

    let mut delta = config.delta;
    let delta_floor = T::c(1e-12);
    let mut sse_trace = Vec::new();
    let mut param_delta_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_outer_iters {
        let next = loop {
            let candidate = contraction_step(&state, delta, data, config, constraints)?;
            if candidate.all_finite() {
                break candidate;
            }
            delta = delta / T::c(2.0);
            if delta < delta_floor {
                return Err(Error::Divergence { iter });
            }
        };
        let (w_now, v_now) = weights_at(&next, data, config, constraints)?;
        let param_delta = match config.param_delta_metric {
            ParamDeltaMetric::Weights => {
                w_now.sub(&w_prev).frob_norm().powi(2) + v_now.sub(&v_prev).frob_norm().powi(2)
            }
            ParamDeltaMetric::State => {
                next.u.sub(&state.u).frob_norm().powi(2)
                    + next.mu.sub(&state.mu).frob_norm().powi(2)
            }
        };
        let sse = data
            .y
            .sub(&next.u.matmul(&config.beta))
            .frob_norm()
            .powi(2);
        sse_trace.push(sse);
        param_delta_trace.push(param_delta);
        state = next;
        w_prev = w_now;
        v_prev = v_now;
        iterations = iter;
        if param_delta <= config.outer_tol {
            converged = true;
            break;
        }
    }

    let weights = WeightSet {
        w: w_prev,
        v: v_prev,
        b: config.b.clone(),
    };
    let foc_report = foc_residuals(&state, &weights, data, config)?;
    Ok(TrainResult {
        weights,
        state,
        iterations,
        sse_trace,
        param_delta_trace,
        converged,
        foc_report,
    })
}
