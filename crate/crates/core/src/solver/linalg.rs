//! Small dense helpers for the subproblem: nonnegative least squares and the
//! orthogonal projector onto the null space of a few constraint rows.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff for pseudo-inverses.
const PINV_TOL: f64 = 1e-12;

/// Least-squares solution of `M·x ≈ b` with minimum norm.
pub(crate) fn lstsq(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if m.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.amax();
    svd.solve(b, PINV_TOL * top.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(m.ncols()))
}

/// Lawson–Hanson: `min ‖M·x − b‖` subject to `x ≥ 0`.
pub(crate) fn nnls(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = m.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let mut passive = vec![false; n];
    let scale = m.amax().max(1.0) * b.amax().max(1.0);
    let tol = 1e-13 * scale * n as f64;
    for _ in 0..3 * n + 10 {
        let w = m.tr_mul(&(b - m * &x));
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &c| w[a].total_cmp(&w[c]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        for _ in 0..3 * n + 10 {
            let cols: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sub = m.select_columns(&cols);
            let z_sub = lstsq(&sub, b);
            if z_sub.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &c) in cols.iter().enumerate() {
                    x[c] = z_sub[k];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (k, &c) in cols.iter().enumerate() {
                if z_sub[k] <= 0.0 {
                    alpha = alpha.min(x[c] / (x[c] - z_sub[k]));
                }
            }
            for (k, &c) in cols.iter().enumerate() {
                x[c] += alpha * (z_sub[k] - x[c]);
                if x[c] <= 1e-15 * scale {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
        }
    }
    x
}

/// A masked row whose component outside the span of earlier rows is below
/// this fraction of its norm counts as dependent.
const DEPENDENT_TOL: f64 = 1e-10;

/// Projector onto `{z : z_i = 0 for fixed i, G·z = 0}`.
pub(crate) struct NullSpaceProjector {
    free: Vec<bool>,
    /// `G` with fixed columns zeroed.
    g: DMatrix<f64>,
    /// Orthonormal basis of the masked row space, built by Gram–Schmidt with
    /// reorthogonalization so fixed coordinates stay exactly zero.
    basis: DMatrix<f64>,
}

impl NullSpaceProjector {
    /// `rows` are full-length constraint rows; their fixed columns are ignored.
    pub(crate) fn new(free: Vec<bool>, rows: &[DVector<f64>]) -> Self {
        let n = free.len();
        let mut g = DMatrix::zeros(rows.len(), n);
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for (k, row) in rows.iter().enumerate() {
            let mut w = DVector::zeros(n);
            for j in 0..n {
                if free[j] {
                    g[(k, j)] = row[j];
                    w[j] = row[j];
                }
            }
            let norm0 = w.norm();
            if norm0 == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for q in &cols {
                    let c = q.dot(&w);
                    w.axpy(-c, q, 1.0);
                }
            }
            let norm = w.norm();
            if norm > DEPENDENT_TOL * norm0 {
                cols.push(w / norm);
            }
        }
        let basis = if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Self { free, g, basis }
    }

    fn masked(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for (o, &f) in out.iter_mut().zip(&self.free) {
            if !f {
                *o = 0.0;
            }
        }
        out
    }

    pub(crate) fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.masked(v);
        if self.basis.ncols() > 0 {
            let c = self.basis.tr_mul(&out);
            out -= &self.basis * c;
        }
        out
    }

    /// Least-squares row multipliers `λ` for `v_F + G_Fᵀ·λ ≈ 0`.
    pub(crate) fn row_multipliers(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.g.nrows() == 0 {
            return DVector::zeros(0);
        }
        -lstsq(&self.g.transpose(), &self.masked(v))
    }
}
