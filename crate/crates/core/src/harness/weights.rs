//! Self-describing JSON weights file, sufficient to reload a trained model
//! for predict-only runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::WeightSet;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub format_version: u32,
    pub n_neurons: usize,
    pub n_in: usize,
    pub theta_w: f64,
    pub theta_v: f64,
    pub activation: ActivationSpec,
    /// Row-major n_neurons x n_neurons.
    pub w: Vec<Vec<f64>>,
    /// Row-major n_in x n_neurons.
    pub v: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
}

fn matrix_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl WeightsFile {
    pub fn from_parts(
        weights: &WeightSet<f64>,
        beta: &Matrix<f64>,
        theta_w: f64,
        theta_v: f64,
        activation: ActivationSpec,
    ) -> Self {
        WeightsFile {
            format_version: FORMAT_VERSION,
            n_neurons: weights.w.rows(),
            n_in: weights.v.rows(),
            theta_w,
            theta_v,
            activation,
            w: matrix_rows(&weights.w),
            v: matrix_rows(&weights.v),
            b: weights.b.data().to_vec(),
            beta: beta.data().to_vec(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let wf: WeightsFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        wf.validate()?;
        Ok(wf)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse {
                context: "weights file".into(),
                message: format!(
                    "format_version {} unsupported (expected {FORMAT_VERSION})",
                    self.format_version
                ),
            });
        }
        let m = self.n_neurons;
        let shapes_ok = self.w.len() == m
            && self.w.iter().all(|r| r.len() == m)
            && self.v.len() == self.n_in
            && self.v.iter().all(|r| r.len() == m)
            && self.b.len() == m
            && self.beta.len() == m;
        if !shapes_ok {
            return Err(Error::Parse {
                context: "weights file".into(),
                message: "matrix shapes are inconsistent with n_neurons/n_in".into(),
            });
        }
        Ok(())
    }

    pub fn to_parts(&self) -> (WeightSet<f64>, Matrix<f64>) {
        let ws = WeightSet {
            w: Matrix::from_rows(&self.w),
            v: Matrix::from_rows(&self.v),
            b: Matrix::col_vec(&self.b),
        };
        (ws, Matrix::col_vec(&self.beta))
    }
}
