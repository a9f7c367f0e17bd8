use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::nnls;

/// Rows with `c_j ≥ −ACTIVE_ROW_TOL` may carry a multiplier.
pub const ACTIVE_ROW_TOL: f64 = 1e-6;

/// Components of the first-order optimality test. Stationarity is relative to
/// `1 + ‖∇f‖`; feasibility and complementarity are absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn residual(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.residual() <= tol
    }
}

pub(crate) fn at_bound(v: f64, bound: f64) -> bool {
    bound.is_finite() && (v - bound).abs() <= 1e-12 * (1.0 + bound.abs())
}

/// Multiplier estimates and residuals at `p`.
///
/// Row multipliers solve a nonnegative least-squares fit of the stationarity
/// condition over the variables not at a bound; bound multipliers take up
/// the remaining gradient with the admissible sign.
pub fn kkt_report(
    p: &DVector<f64>,
    g: &DVector<f64>,
    c: &DVector<f64>,
    jac: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> (KktReport, DVector<f64>, DVector<f64>) {
    let n = p.len();
    let at_lo: Vec<bool> = (0..n).map(|i| at_bound(p[i], lower[i])).collect();
    let at_hi: Vec<bool> = (0..n).map(|i| at_bound(p[i], upper[i])).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !at_lo[i] && !at_hi[i]).collect();
    let active: Vec<usize> = (0..c.len()).filter(|&j| c[j] >= -ACTIVE_ROW_TOL).collect();

    let mut gamma_c = DVector::zeros(c.len());
    if !active.is_empty() && !free.is_empty() {
        let m = DMatrix::from_fn(free.len(), active.len(), |i, k| jac[(active[k], free[i])]);
        let b = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
        let sol = nnls(&m, &b);
        for (k, &j) in active.iter().enumerate() {
            gamma_c[j] = sol[k];
        }
    }
    let r = g + jac.tr_mul(&gamma_c);
    let mut gamma_b = DVector::zeros(n);
    let mut resid = DVector::zeros(n);
    for i in 0..n {
        match (at_lo[i], at_hi[i]) {
            (true, true) => gamma_b[i] = -r[i],
            (true, false) => {
                gamma_b[i] = -r[i].max(0.0);
                resid[i] = r[i].min(0.0);
            }
            (false, true) => {
                gamma_b[i] = -r[i].min(0.0);
                resid[i] = r[i].max(0.0);
            }
            (false, false) => resid[i] = r[i],
        }
    }
    let feasibility = c.iter().fold(0.0f64, |m, &v| m.max(v));
    let complementarity = c.iter().zip(gamma_c.iter()).map(|(cj, gj)| (cj * gj).abs()).sum();
    let report = KktReport {
        stationarity: resid.norm() / (1.0 + g.norm()),
        feasibility,
        complementarity,
    };
    (report, gamma_c, gamma_b)
}
