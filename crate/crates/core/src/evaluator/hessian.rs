use nalgebra::{DMatrix, DVector};

use crate::sparse::CsrMatrix;

/// `∇²f_N` either as an explicit matrix or as `λv + (1/N)·Bᵀ·H·(B·v)` with
/// the sparse inner sum `H = Σᵢ Diag(ωᵢ)·Q·Diag(ωᵢ)`.
pub enum HessianOperator<'a> {
    Dense(DMatrix<f64>),
    Sparse {
        b: &'a DMatrix<f64>,
        inner: CsrMatrix,
        lambda: f64,
        samples: usize,
    },
}

impl<'a> HessianOperator<'a> {
    pub fn dense(h: DMatrix<f64>) -> Self {
        Self::Dense(h)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(h) => h.nrows(),
            Self::Sparse { b, .. } => b.ncols(),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense(h) => h * v,
            Self::Sparse {
                b,
                inner,
                lambda,
                samples,
            } => {
                let w = *b * v;
                let z = inner.mul_dvec(&w);
                let mut out = b.tr_mul(&z) / *samples as f64;
                out.axpy(*lambda, v, 1.0);
                out
            }
        }
    }

    /// Materializes the operator column by column.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(h) => h.clone(),
            Self::Sparse { .. } => {
                let n = self.dim();
                let mut out = DMatrix::zeros(n, n);
                for j in 0..n {
                    let mut e = DVector::zeros(n);
                    e[j] = 1.0;
                    out.set_column(j, &self.apply(&e));
                }
                out
            }
        }
    }
}

/// Curvature of the constraint functions. Each `c_N` row is piecewise linear
/// in `p` with kinks of probability zero, so its Hessian is the zero matrix
/// wherever it exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HessianZero;

impl HessianZero {
    pub fn is_zero(&self) -> bool {
        true
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(v.len())
    }
}
