//! The statistical model: dataset and hyperparameter types, the inference-time
//! forward fixed-point solve, the regularized loss, prediction, and the
//! first-order-condition residual report.

use serde::{Deserialize, Serialize};

use crate::activation::{self, ActivationSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Design matrix plus target column.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub x: Matrix<T>,
    pub y: Matrix<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Matrix<T>, y: Matrix<T>) -> Result<Self> {
        if x.rows() < 1 || x.cols() < 1 {
            return Err(Error::ShapeMismatch(
                "dataset needs at least one observation and one input column".into(),
            ));
        }
        if y.cols() != 1 || y.rows() != x.rows() {
            return Err(Error::ShapeMismatch(format!(
                "Y must be {}x1, got {}x{}",
                x.rows(),
                y.rows(),
                y.cols()
            )));
        }
        x.check_finite("dataset X")?;
        y.check_finite("dataset Y")?;
        Ok(Dataset { x, y })
    }

    pub fn n_obs(&self) -> usize {
        self.x.rows()
    }

    pub fn n_in(&self) -> usize {
        self.x.cols()
    }
}

/// Which parameter pair the outer stopping rule measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamDeltaMetric {
    /// Squared Frobenius deltas of (W, V) between outer iterations.
    Weights,
    /// Squared Frobenius deltas of (U, mu) between outer iterations.
    State,
}

/// Hyperparameters and stopping rules for one training run.
#[derive(Clone, Debug)]
pub struct ModelConfig<T> {
    pub n_neurons: usize,
    pub theta_w: T,
    pub theta_v: T,
    pub beta: Matrix<T>,
    pub b: Matrix<T>,
    pub activation: ActivationSpec,
    pub delta: T,
    pub max_outer_iters: usize,
    pub outer_tol: T,
    pub inner_tol: T,
    pub inner_max_iters: usize,
    pub param_delta_metric: ParamDeltaMetric,
}

impl<T: Scalar> ModelConfig<T> {
    /// Validates hard requirements; returns advisory warnings for the
    /// condition diagnostics (they never block training).
    pub fn validate(&self) -> Result<Vec<String>> {
        let m = self.n_neurons;
        if m == 0 {
            return Err(Error::InvalidConfig {
                field: "n_neurons".into(),
                message: "must be positive".into(),
            });
        }
        for (name, mat) in [("beta", &self.beta), ("b", &self.b)] {
            if mat.rows() != m || mat.cols() != 1 {
                return Err(Error::InvalidConfig {
                    field: name.into(),
                    message: format!("must be {}x1, got {}x{}", m, mat.rows(), mat.cols()),
                });
            }
            mat.check_finite(name)?;
        }
        if self.theta_w <= T::zero() {
            return Err(Error::InvalidConfig {
                field: "theta_w".into(),
                message: "must be positive".into(),
            });
        }
        if self.theta_v <= T::zero() {
            return Err(Error::InvalidConfig {
                field: "theta_v".into(),
                message: "must be positive".into(),
            });
        }
        if self.delta < T::zero() || self.delta > T::one() {
            return Err(Error::InvalidConfig {
                field: "delta".into(),
                message: "must lie in [0, 1]".into(),
            });
        }
        if self.outer_tol <= T::zero() || self.inner_tol <= T::zero() {
            return Err(Error::InvalidConfig {
                field: "outer_tol/inner_tol".into(),
                message: "tolerances must be positive".into(),
            });
        }
        self.activation.validate()?;

        let mut warnings = Vec::new();
        let btb = self.beta.transpose().matmul(&self.beta)[(0, 0)];
        if btb <= T::zero() {
            warnings.push("beta'beta = 0: condition diagnostics are undefined".to_string());
        }
        if self.theta_w <= T::one() {
            warnings
                .push("theta_w <= 1: the mu/U bounds of the diagnostics are infinite".to_string());
        }
        Ok(warnings)
    }

    pub fn beta_dot(&self) -> T {
        self.beta.transpose().matmul(&self.beta)[(0, 0)]
    }
}

/// Recovered parameters plus the fixed offset b.
#[derive(Clone, Debug)]
pub struct WeightSet<T> {
    pub w: Matrix<T>,
    pub v: Matrix<T>,
    pub b: Matrix<T>,
}

/// The (U, mu) pair evolved by the contraction.
#[derive(Clone, Debug)]
pub struct IterState<T> {
    pub u: Matrix<T>,
    pub mu: Matrix<T>,
}

impl<T: Scalar> IterState<T> {
    pub fn all_finite(&self) -> bool {
        self.u.all_finite() && self.mu.all_finite()
    }
}

/// 1 b' term of the forward equation.
pub fn ones_b<T: Scalar>(n_obs: usize, b: &Matrix<T>) -> Matrix<T> {
    Matrix::ones(n_obs, 1).matmul(&b.transpose())
}

/// Solves U = XV + 1b' + F(U)W by fixed-point iteration from U0 = XV + 1b'.
pub fn solve_u_forward<T: Scalar>(
    data_x: &Matrix<T>,
    weights: &WeightSet<T>,
    act: &ActivationSpec,
    tol: T,
    max_iters: usize,
) -> Result<Matrix<T>> {
    let base = data_x.matmul(&weights.v).add(&ones_b(data_x.rows(), &weights.b));
    solve_u_forward_from(base.clone(), &base, &weights.w, act, tol, max_iters)
}

/// Same iteration from a caller-supplied start point.
pub fn solve_u_forward_from<T: Scalar>(
    start: Matrix<T>,
    base: &Matrix<T>,
    w: &Matrix<T>,
    act: &ActivationSpec,
    tol: T,
    max_iters: usize,
) -> Result<Matrix<T>> {
    let wnorm = w.spectral_norm()?;
    if wnorm >= T::one() {
        return Err(Error::ContractionPrecondition {
            norm: wnorm.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut u = start;
    let mut residual = T::infinity();
    for _ in 0..max_iters {
        let next = base.add(&activation::f_matrix(act, &u)?.matmul(w));
        residual = next.sub(&u).frob_norm();
        u = next;
        // ||G(u) - u|| at the returned point is at most ||W|| * residual
        if residual <= tol {
            return Ok(u);
        }
    }
    Err(Error::ForwardNonConvergence {
        iters: max_iters,
        residual: residual.to_f64().unwrap_or(f64::NAN),
    })
}

/// Eq-6 objective: half SSE plus the semicircle penalty on W and the
/// ridge penalty on V.
pub fn loss<T: Scalar>(
    state_u: &Matrix<T>,
    weights: &WeightSet<T>,
    data: &Dataset<T>,
    config: &ModelConfig<T>,
) -> Result<T> {
    let tw = config.theta_w;
    let trw = weights.w.frob_norm().powi(2);
    let domain = tw * tw * trw;
    if domain > T::one() {
        return Err(Error::SemicircleDomain {
            value: domain.to_f64().unwrap_or(f64::NAN),
        });
    }
    let eps = data.y.sub(&state_u.matmul(&config.beta));
    let sse_half = eps.frob_norm().powi(2) / T::c(2.0);
    // The scale 1/theta_w (rather than 1/(2 theta_w)) is the one whose
    // gradient is theta_w (1 - theta_w^2 tr(W'W))^(-1/2) W, matching the
    // stationarity condition the solver targets.
    let w_pen = (T::one() - (T::one() - domain).sqrt()) / tw;
    let v_pen = config.theta_v / T::c(2.0) * weights.v.frob_norm().powi(2);
    Ok(sse_half + w_pen + v_pen)
}

/// Prediction on fresh inputs: solve the forward equation and read out U beta.
pub fn predict<T: Scalar>(
    new_x: &Matrix<T>,
    weights: &WeightSet<T>,
    beta: &Matrix<T>,
    act: &ActivationSpec,
    tol: T,
    max_iters: usize,
) -> Result<Matrix<T>> {
    let u = solve_u_forward(new_x, weights, act, tol, max_iters)?;
    Ok(u.matmul(beta))
}

/// Frobenius norms of the six stationarity residuals, with the error and
/// multiplier pair eliminated analytically (eps = Y - U beta, lambda = -eps).
#[derive(Clone, Debug)]
pub struct FocReport<T> {
    /// eps + lambda (identically zero after elimination).
    pub r_eps_lambda: T,
    /// Stationarity in W against F(U)'mu.
    pub r_w: T,
    /// Stationarity in V against X'mu.
    pub r_v: T,
    /// Forward equation U - XV - 1b' - F(U)W.
    pub r_forward: T,
    /// Observation equation U beta + eps - Y (identically zero).
    pub r_obs: T,
    /// Multiplier equation lambda beta' + mu - Fdot(U) o (mu W').
    pub r_mu: T,
    /// max residual / (1 + ||Y||).
    pub aggregate: T,
}

pub fn foc_residuals<T: Scalar>(
    state: &IterState<T>,
    weights: &WeightSet<T>,
    data: &Dataset<T>,
    config: &ModelConfig<T>,
) -> Result<FocReport<T>> {
    let act = &config.activation;
    let u = &state.u;
    let mu = &state.mu;
    let w = &weights.w;
    let fu = activation::f_matrix(act, u)?;
    let fdot = activation::fdot_matrix(act, u)?;
    let eps = data.y.sub(&u.matmul(&config.beta));
    let lambda = eps.scale(-T::one());

    let tw = config.theta_w;
    let trw = w.frob_norm().powi(2);
    let k = tw / (T::one() - tw * tw * trw).max(T::epsilon()).sqrt();
    let r_w = w.scale(k).sub(&fu.transpose().matmul(mu)).frob_norm();
    let r_v = weights
        .v
        .scale(config.theta_v)
        .sub(&data.x.transpose().matmul(mu))
        .frob_norm();
    let r_forward = u
        .sub(&data.x.matmul(&weights.v))
        .sub(&ones_b(data.n_obs(), &weights.b))
        .sub(&fu.matmul(w))
        .frob_norm();
    let r_obs = u
        .matmul(&config.beta)
        .add(&eps)
        .sub(&data.y)
        .frob_norm();
    let r_mu = lambda
        .matmul(&config.beta.transpose())
        .add(mu)
        .sub(&fdot.hadamard(&mu.matmul(&w.transpose())))
        .frob_norm();
    let r_eps_lambda = eps.add(&lambda).frob_norm();

    let max = r_eps_lambda
        .max(r_w)
        .max(r_v)
        .max(r_forward)
        .max(r_obs)
        .max(r_mu);
    Ok(FocReport {
        r_eps_lambda,
        r_w,
        r_v,
        r_forward,
        r_obs,
        r_mu,
        aggregate: max / (T::one() + data.y.frob_norm()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    type M = Matrix<f64>;

    pub fn small_config(n_neurons: usize) -> ModelConfig<f64> {
        ModelConfig {
            n_neurons,
            theta_w: 1.2,
            theta_v: 0.05,
            beta: M::ones(n_neurons, 1),
            b: M::from_fn(n_neurons, 1, |i, _| i as f64),
            activation: ActivationSpec::softplus(0.05),
            delta: 0.001,
            max_outer_iters: 20_000,
            outer_tol: 1e-3,
            inner_tol: 1e-10,
            inner_max_iters: 10_000,
            param_delta_metric: ParamDeltaMetric::Weights,
        }
    }

    fn zero_weights(n_in: usize, m: usize, b: &M) -> WeightSet<f64> {
        WeightSet {
            w: M::zeros(m, m),
            v: M::zeros(n_in, m),
            b: b.clone(),
        }
    }

    #[test]
    fn forward_zero_weights_is_bias_plane() {
        let cfg = small_config(3);
        let x = M::from_fn(5, 2, |i, j| (i + j) as f64 * 0.1);
        let ws = zero_weights(2, 3, &cfg.b);
        let u = solve_u_forward(&x, &ws, &cfg.activation, 1e-12, 10).unwrap();
        assert!(u.sub(&ones_b(5, &cfg.b)).frob_norm() < 1e-12);
    }

    #[test]
    fn forward_identity_activation_matches_linear_solve() {
        let mut rng = StdRng::seed_from_u64(41);
        let m = 3;
        let mut w = M::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let norm = w.spectral_norm().unwrap();
        w = w.scale(0.85 / norm);
        let x = M::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));
        let v = M::from_fn(2, m, |_, _| rng.gen_range(-1.0..1.0));
        let b = M::col_vec(&[0.5, -0.2, 0.1]);
        let ws = WeightSet { w: w.clone(), v: v.clone(), b: b.clone() };
        let act = ActivationSpec::identity();
        let u = solve_u_forward(&x, &ws, &act, 1e-12, 100_000).unwrap();
        // closed form (XV + 1b')(I - W)^-1, via the transposed linear system
        let base = x.matmul(&v).add(&ones_b(6, &b));
        let lhs = M::identity(m).sub(&w).transpose();
        let want = M::lu_solve(&lhs, &base.transpose(), "I - W'").unwrap().transpose();
        assert!(u.sub(&want).frob_norm() < 1e-8);
    }

    #[test]
    fn forward_unique_from_distinct_starts() {
        let mut rng = StdRng::seed_from_u64(43);
        let m = 3;
        let mut w = M::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        w = w.scale(0.8 / w.spectral_norm().unwrap());
        let x = M::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let v = M::from_fn(2, m, |_, _| rng.gen_range(-1.0..1.0));
        let b = M::zeros(m, 1);
        let base = x.matmul(&v).add(&ones_b(5, &b));
        let act = ActivationSpec::softplus(0.5);
        let tol = 1e-11;
        let s1 = M::from_fn(5, m, |_, _| rng.gen_range(-5.0..5.0));
        let s2 = M::from_fn(5, m, |_, _| rng.gen_range(-5.0..5.0));
        let u1 = solve_u_forward_from(s1, &base, &w, &act, tol, 100_000).unwrap();
        let u2 = solve_u_forward_from(s2, &base, &w, &act, tol, 100_000).unwrap();
        assert!(u1.sub(&u2).frob_norm() < 10.0 * tol);
    }

    #[test]
    fn forward_rejects_expanding_w() {
        let cfg = small_config(2);
        let x = M::ones(3, 1);
        let ws = WeightSet {
            w: M::diag(&[1.5, 0.2]),
            v: M::zeros(1, 2),
            b: M::zeros(2, 1),
        };
        assert!(matches!(
            solve_u_forward(&x, &ws, &cfg.activation, 1e-9, 10),
            Err(Error::ContractionPrecondition { .. })
        ));
    }

    #[test]
    fn forward_residual_contracts_geometrically_linear_case() {
        let mut rng = StdRng::seed_from_u64(47);
        let m = 3;
        let mut w = M::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        w = w.scale(0.7 / w.spectral_norm().unwrap());
        let wnorm = w.spectral_norm().unwrap();
        let base = M::from_fn(4, m, |_, _| rng.gen_range(-1.0..1.0));
        let act = ActivationSpec::identity();
        let mut u = base.clone();
        let mut prev_res = f64::INFINITY;
        for _ in 0..40 {
            let next = base.add(&crate::activation::f_matrix(&act, &u).unwrap().matmul(&w));
            let res = next.sub(&u).frob_norm();
            if prev_res.is_finite() {
                assert!(res <= wnorm * prev_res + 1e-12);
            }
            prev_res = res;
            u = next;
        }
    }

    #[test]
    fn loss_at_zero_weights() {
        let cfg = small_config(3);
        let x = M::from_fn(4, 2, |i, _| i as f64);
        let y = M::col_vec(&[1.0, 2.0, 3.0, 4.0]);
        let data = Dataset::new(x, y.clone()).unwrap();
        let ws = zero_weights(2, 3, &cfg.b);
        let u = ones_b(4, &cfg.b);
        let got = loss(&u, &ws, &data, &cfg).unwrap();
        let btb = cfg.b.transpose().matmul(&cfg.beta)[(0, 0)];
        let want = 0.5 * y.sub(&M::ones(4, 1).scale(btb)).frob_norm().powi(2);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn loss_regularizer_zero_at_origin_and_domain_error() {
        let cfg = small_config(2);
        let data = Dataset::new(M::ones(3, 1), M::zeros(3, 1)).unwrap();
        let u = ones_b(3, &cfg.b);
        let ws = zero_weights(1, 2, &cfg.b);
        // W = 0: only the SSE and V terms contribute
        let base = loss(&u, &ws, &data, &cfg).unwrap();
        let eps = data.y.sub(&u.matmul(&cfg.beta));
        assert!((base - 0.5 * eps.frob_norm().powi(2)).abs() < 1e-12);
        // W outside the semicircle domain
        let ws_bad = WeightSet {
            w: M::diag(&[1.0, 1.0]),
            v: M::zeros(1, 2),
            b: cfg.b.clone(),
        };
        assert!(matches!(
            loss(&u, &ws_bad, &data, &cfg),
            Err(Error::SemicircleDomain { .. })
        ));
    }

    #[test]
    fn w_regularizer_gradient_matches_finite_difference() {
        let cfg = small_config(2);
        let tw = cfg.theta_w;
        let w = M::from_rows(&[vec![0.2, -0.1], vec![0.05, 0.3]]);
        let pen =
            |w: &M| -> f64 { (1.0 - (1.0 - tw * tw * w.frob_norm().powi(2)).sqrt()) / tw };
        let trw = w.frob_norm().powi(2);
        let grad = w.scale(tw / (1.0 - tw * tw * trw).sqrt());
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[(i, j)] += h;
                wm[(i, j)] -= h;
                let fd = (pen(&wp) - pen(&wm)) / (2.0 * h);
                assert!((grad[(i, j)] - fd).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn predict_trivial_cases() {
        let cfg = small_config(3);
        let x = M::from_fn(4, 2, |i, j| (i * 2 + j) as f64 * 0.3);
        let ws = zero_weights(2, 3, &cfg.b);
        // beta = 0 -> yhat = 0
        let zero_beta = M::zeros(3, 1);
        let yhat = predict(&x, &ws, &zero_beta, &cfg.activation, 1e-10, 100).unwrap();
        assert!(yhat.frob_norm() < 1e-12);
        // W = 0, V = 0 -> yhat = (b'beta) 1
        let yhat = predict(&x, &ws, &cfg.beta, &cfg.activation, 1e-10, 100).unwrap();
        let btb = cfg.b.transpose().matmul(&cfg.beta)[(0, 0)];
        assert!(yhat.sub(&M::ones(4, 1).scale(btb)).frob_norm() < 1e-12);
    }

    #[test]
    fn foc_residuals_constructed_point() {
        let cfg = small_config(3);
        let x = M::from_fn(5, 2, |i, j| (i + 3 * j) as f64 * 0.2);
        let y = M::col_vec(&[3.0, -1.0, 2.0, 0.5, 7.0]);
        let data = Dataset::new(x, y.clone()).unwrap();
        let ws = zero_weights(2, 3, &cfg.b);
        let u = ones_b(5, &cfg.b);
        let state = IterState { u: u.clone(), mu: M::zeros(5, 3) };
        let rep = foc_residuals(&state, &ws, &data, &cfg).unwrap();
        assert_eq!(rep.r_eps_lambda, 0.0);
        assert!(rep.r_w < 1e-14);
        assert!(rep.r_v < 1e-14);
        assert!(rep.r_forward < 1e-14);
        assert_eq!(rep.r_obs, 0.0);
        let eps = y.sub(&u.matmul(&cfg.beta));
        let want = eps.matmul(&cfg.beta.transpose()).frob_norm();
        assert!((rep.r_mu - want).abs() < 1e-12);
    }

    #[test]
    fn loss_invariant_under_row_permutation() {
        let mut rng = StdRng::seed_from_u64(53);
        let cfg = small_config(3);
        let n = 6;
        let x = M::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = M::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
        let u = M::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let ws = WeightSet {
            w: M::from_fn(3, 3, |_, _| rng.gen_range(-0.2..0.2)),
            v: M::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0)),
            b: cfg.b.clone(),
        };
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let l1 = loss(&u, &ws, &data, &cfg).unwrap();
        let perm: Vec<usize> = vec![3, 0, 5, 1, 4, 2];
        let px = M::from_fn(n, 2, |i, j| x[(perm[i], j)]);
        let py = M::from_fn(n, 1, |i, j| y[(perm[i], j)]);
        let pu = M::from_fn(n, 3, |i, j| u[(perm[i], j)]);
        let pdata = Dataset::new(px, py).unwrap();
        let l2 = loss(&pu, &ws, &pdata, &cfg).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }
}
