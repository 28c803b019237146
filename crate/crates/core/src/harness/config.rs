//! JSON run configuration: model block, data source (CSV or generated
//! polynomial), optional constraints, and artifact switches.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::constraints::{fnn_mask_constraints, ConstraintSet, NSpec};
use crate::error::{Error, Result};
use crate::harness::csv;
use crate::matrix::Matrix;
use crate::model::{Dataset, ModelConfig, ParamDeltaMetric};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub data: DataSpec,
    #[serde(default)]
    pub constraints: Option<ConstraintBlock>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub emit_plots: bool,
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n_neurons: usize,
    pub theta_w: f64,
    pub theta_v: f64,
    pub beta: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: ActivationSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer_iters: usize,
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_inner_max")]
    pub inner_max_iters: usize,
    #[serde(default = "default_metric")]
    pub param_delta_metric: ParamDeltaMetric,
}

fn default_delta() -> f64 {
    0.001
}
fn default_max_outer() -> usize {
    20_000
}
fn default_outer_tol() -> f64 {
    1e-3
}
fn default_inner_tol() -> f64 {
    1e-10
}
fn default_inner_max() -> usize {
    100_000
}
fn default_metric() -> ParamDeltaMetric {
    ParamDeltaMetric::Weights
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Csv {
        csv_path: PathBuf,
        x_columns: Vec<String>,
        y_column: String,
    },
    Generator {
        generator: PolynomialSpec,
    },
}

/// Polynomial dataset generator: coefficients in descending degree over an
/// evenly spaced inclusive grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    pub coefficients: Vec<f64>,
    pub domain: [f64; 2],
    pub n_points: usize,
    #[serde(default = "default_true")]
    pub include_constant_column: bool,
}

impl PolynomialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.domain[0] >= self.domain[1] {
            return Err(Error::InvalidConfig {
                field: "data.generator.domain".into(),
                message: format!("requires lo < hi, got [{}, {}]", self.domain[0], self.domain[1]),
            });
        }
        if self.n_points < 2 {
            return Err(Error::InvalidConfig {
                field: "data.generator.n_points".into(),
                message: format!("requires at least 2 points, got {}", self.n_points),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum ConstraintBlock {
    /// Pin every W entry except the feedforward links of consecutive layers.
    #[serde(rename = "fnn_layers")]
    FnnLayers(Vec<usize>),
    /// Explicit (N, V0, R, r) blocks; omitted N means "V unconstrained".
    #[serde(rename = "dense")]
    Dense {
        #[serde(default)]
        n: Option<Vec<Vec<f64>>>,
        v0: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        r_vec: Vec<f64>,
    },
}

fn to_matrix(rows: &[Vec<f64>], field: &str) -> Result<Matrix<f64>> {
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::InvalidConfig {
            field: field.into(),
            message: "must be a non-empty rectangular array of arrays".into(),
        });
    }
    Ok(Matrix::from_rows(rows))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.model.to_model_config()?.validate()?;
        if let DataSpec::Generator { generator } = &cfg.data {
            generator.validate()?;
        }
        Ok(cfg)
    }

    /// Loads the dataset plus the scalar axis used for plotting (the single
    /// non-constant design column when there is one, else the row index).
    pub fn load_dataset(&self, base: &Path) -> Result<(Dataset<f64>, Vec<f64>)> {
        match &self.data {
            DataSpec::Generator { generator } => {
                let data = generate_polynomial_dataset(generator)?;
                let axis = grid(generator);
                Ok((data, axis))
            }
            DataSpec::Csv {
                csv_path,
                x_columns,
                y_column,
            } => {
                let path = if csv_path.is_absolute() {
                    csv_path.clone()
                } else {
                    base.join(csv_path)
                };
                let table = csv::read_csv(&path)?;
                let mut x_cols = Vec::with_capacity(x_columns.len());
                for name in x_columns {
                    x_cols.push(table.column(name)?.to_vec());
                }
                let y = table.column(y_column)?.to_vec();
                let n = y.len();
                let x = Matrix::from_fn(n, x_cols.len(), |i, j| x_cols[j][i]);
                let data = Dataset::new(x, Matrix::col_vec(&y))?;
                let axis = plot_axis(&data);
                Ok((data, axis))
            }
        }
    }

    pub fn build_constraints(&self) -> Result<Option<ConstraintSet<f64>>> {
        let m = self.model.n_neurons;
        let n_in = self.n_in_hint();
        match &self.constraints {
            None => Ok(None),
            Some(ConstraintBlock::FnnLayers(layers)) => {
                let total: usize = layers.iter().sum();
                if total != m {
                    return Err(Error::InvalidConfig {
                        field: "constraints.fnn_layers".into(),
                        message: format!("layer sizes sum to {total}, but n_neurons is {m}"),
                    });
                }
                let (r, r_vec) = fnn_mask_constraints(layers);
                let v0 = Matrix::zeros(n_in.unwrap_or(1), m);
                Ok(Some(ConstraintSet::build(NSpec::Identity, v0, r, r_vec)?))
            }
            Some(ConstraintBlock::Dense { n, v0, r, r_vec }) => {
                let n_spec = match n {
                    None => NSpec::Identity,
                    Some(rows) => NSpec::Explicit(to_matrix(rows, "constraints.dense.n")?),
                };
                let v0 = to_matrix(v0, "constraints.dense.v0")?;
                let r = to_matrix(r, "constraints.dense.r")?;
                let r_vec = Matrix::col_vec(r_vec);
                Ok(Some(ConstraintSet::build(n_spec, v0, r, r_vec)?))
            }
        }
    }

    fn n_in_hint(&self) -> Option<usize> {
        match &self.data {
            DataSpec::Csv { x_columns, .. } => Some(x_columns.len()),
            DataSpec::Generator { generator } => {
                Some(if generator.include_constant_column { 2 } else { 1 })
            }
        }
    }
}

impl ModelBlock {
    pub fn to_model_config(&self) -> Result<ModelConfig<f64>> {
        Ok(ModelConfig {
            n_neurons: self.n_neurons,
            theta_w: self.theta_w,
            theta_v: self.theta_v,
            beta: Matrix::col_vec(&self.beta),
            b: Matrix::col_vec(&self.b),
            activation: self.activation,
            delta: self.delta,
            max_outer_iters: self.max_outer_iters,
            outer_tol: self.outer_tol,
            inner_tol: self.inner_tol,
            inner_max_iters: self.inner_max_iters,
            param_delta_metric: self.param_delta_metric,
        })
    }
}

fn grid(spec: &PolynomialSpec) -> Vec<f64> {
    let [lo, hi] = spec.domain;
    let n = spec.n_points;
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64) / ((n - 1) as f64))
        .collect()
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

/// Builds the dataset for a polynomial regression: design matrix of an
/// optional constant-1 column plus the grid, target = polynomial(grid).
pub fn generate_polynomial_dataset(spec: &PolynomialSpec) -> Result<Dataset<f64>> {
    spec.validate()?;
    let xs = grid(spec);
    let n = xs.len();
    let cols = if spec.include_constant_column { 2 } else { 1 };
    let x = Matrix::from_fn(n, cols, |i, j| {
        if spec.include_constant_column && j == 0 {
            1.0
        } else {
            xs[i]
        }
    });
    let y = Matrix::from_fn(n, 1, |i, _| horner(&spec.coefficients, xs[i]));
    Dataset::new(x, y)
}

/// Scalar plot axis: the unique non-constant design column, else row index.
pub fn plot_axis(data: &Dataset<f64>) -> Vec<f64> {
    let n = data.n_obs();
    let mut varying = Vec::new();
    for j in 0..data.n_in() {
        let first = data.x[(0, j)];
        if (0..n).any(|i| data.x[(i, j)] != first) {
            varying.push(j);
        }
    }
    if varying.len() == 1 {
        let j = varying[0];
        (0..n).map(|i| data.x[(i, j)]).collect()
    } else {
        (0..n).map(|i| i as f64).collect()
    }
}
