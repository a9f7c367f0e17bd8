use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EvalPath;

/// Wall-clock seconds per evaluated component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTimings {
    pub flows: f64,
    pub objective: f64,
    pub constraint: f64,
    pub gradient: f64,
    pub jacobian: f64,
    pub hessian: f64,
}

impl EvalTimings {
    pub fn total(&self) -> f64 {
        self.flows + self.objective + self.constraint + self.gradient + self.jacobian + self.hessian
    }
}

/// Everything evaluated at one price vector. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub objective: f64,
    pub constraint: Vec<f64>,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    pub constraint_jacobian: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hessian: Option<Vec<Vec<f64>>>,
    pub path: EvalPath,
    pub timing: EvalTimings,
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl EvalReport {
    pub fn new(
        objective: f64,
        constraint: DVector<f64>,
        gradient: DVector<f64>,
        constraint_jacobian: DMatrix<f64>,
        hessian: Option<DMatrix<f64>>,
        path: EvalPath,
        timing: EvalTimings,
    ) -> Self {
        Self {
            objective,
            gradient_norm: gradient.norm(),
            constraint: constraint.as_slice().to_vec(),
            gradient: gradient.as_slice().to_vec(),
            constraint_jacobian: rows(&constraint_jacobian),
            hessian: hessian.as_ref().map(rows),
            path,
            timing,
        }
    }

    pub fn gradient_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.gradient)
    }

    pub fn constraint_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.constraint)
    }

    pub fn jacobian_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.constraint_jacobian, self.gradient.len())
    }

    pub fn hessian_matrix(&self) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| from_rows(h, self.gradient.len()))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

fn from_rows(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}
