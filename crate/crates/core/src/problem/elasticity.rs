use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Relative eigenvalue floor used when repairing a covariance that is not
/// numerically positive semi-definite.
pub const PSD_REPAIR_TOL: f64 = 1e-10;

/// A factor `L` with `Σ = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceFactor {
    /// Independent coordinates; holds the standard deviations.
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl CovarianceFactor {
    pub fn isotropic(dim: usize, std: f64) -> Self {
        Self::Diagonal(vec![std; dim])
    }

    /// Factors a full covariance. Cholesky is tried first; otherwise the
    /// symmetric eigendecomposition is used with eigenvalues below
    /// `PSD_REPAIR_TOL · max(1, λ_max)` clamped to zero.
    pub fn from_covariance(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Dimension("covariance must be square".into()));
        }
        let sym = (sigma + sigma.transpose()) * 0.5;
        if let Some(chol) = sym.clone().cholesky() {
            return Ok(Self::Dense(chol.l()));
        }
        let eig = sym.symmetric_eigen();
        let top = eig.eigenvalues.max().max(1.0);
        let mut vectors = eig.eigenvectors;
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < -PSD_REPAIR_TOL * top * 1e4 {
                return Err(Error::Domain(format!(
                    "covariance has eigenvalue {lam}, not positive semi-definite"
                )));
            }
            let scale = if lam > PSD_REPAIR_TOL * top { lam.sqrt() } else { 0.0 };
            vectors.column_mut(j).scale_mut(scale);
        }
        Ok(Self::Dense(vectors))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal(d) => d.len(),
            Self::Dense(l) => l.nrows(),
        }
    }

    /// Writes `L·z` into `out`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        match self {
            Self::Diagonal(d) => {
                for ((o, &s), &zi) in out.iter_mut().zip(d).zip(z) {
                    *o = s * zi;
                }
            }
            Self::Dense(l) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..l.ncols()).map(|j| l[(i, j)] * z[j]).sum();
                }
            }
        }
    }

    /// Number of standard-normal draws one sample consumes.
    pub fn latent_dim(&self) -> usize {
        match self {
            Self::Diagonal(d) => d.len(),
            Self::Dense(l) => l.ncols(),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Self::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_iterator(
                d.len(),
                d.iter().map(|s| s * s),
            )),
            Self::Dense(l) => l * l.transpose(),
        }
    }
}

/// Price elasticity `B` and the Gaussian noise `ζ ~ N(μ, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityModel {
    b: DMatrix<f64>,
    mu: DVector<f64>,
    factor: CovarianceFactor,
}

impl ElasticityModel {
    pub fn new(b: DMatrix<f64>, mu: DVector<f64>, factor: CovarianceFactor) -> Result<Self> {
        if !b.is_square() {
            return Err(Error::Dimension("elasticity must be square".into()));
        }
        check_len("noise mean", mu.len(), b.nrows())?;
        check_len("covariance factor", factor.dim(), b.nrows())?;
        Ok(Self { b, mu, factor })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn factor(&self) -> &CovarianceFactor {
        &self.factor
    }

    pub fn with_noise(self, mu: DVector<f64>, factor: CovarianceFactor) -> Result<Self> {
        Self::new(self.b, mu, factor)
    }

    /// Largest eigenvalue of the symmetric part of `B`.
    pub fn max_symmetric_eigenvalue(&self) -> f64 {
        let sym = (&self.b + self.b.transpose()) * 0.5;
        sym.symmetric_eigenvalues().max()
    }
}

/// Upper and lower Collatz–Wielandt bounds on the Perron root of an
/// entrywise nonnegative symmetric matrix.
fn perron_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let n = m.nrows();
    if m.iter().all(|&v| v == 0.0) {
        return (0.0, 0.0);
    }
    // Iterate on M + I, which is primitive whenever M is irreducible.
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..10_000 {
        let w = m * &v + &v;
        let (mut r_lo, mut r_hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            if v[i] > 0.0 {
                let r = w[i] / v[i];
                r_lo = r_lo.min(r);
                r_hi = r_hi.max(r);
            } else {
                r_hi = f64::INFINITY;
            }
        }
        lo = r_lo - 1.0;
        hi = hi.min(r_hi - 1.0);
        v = &w / w.norm();
        if hi - lo <= 1e-13 * hi.abs() {
            break;
        }
    }
    (hi, lo)
}

/// `B = −I + ε·M`, `M = SSᵀ` with its diagonal zeroed, `S_ij ~ U[0, 1]`, and
/// `ε = eps_fraction / λ_max(M)` (with `λ_max` bounded from above). Noise is
/// left at `μ = 0`, `Σ = 0`.
pub fn gen_elasticity(r: usize, eps_fraction: f64, seed: u64) -> Result<ElasticityModel> {
    if r == 0 {
        return Err(Error::Domain("elasticity dimension must be positive".into()));
    }
    if !(eps_fraction > 0.0 && eps_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "eps_fraction {eps_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = DMatrix::from_fn(r, r, |_, _| rng.random::<f64>());
    let mut m = &s * s.transpose();
    m.fill_diagonal(0.0);
    let (lambda_max, _) = perron_bounds(&m);
    let eps = if lambda_max > 0.0 {
        eps_fraction / lambda_max
    } else {
        0.0
    };
    let b = m * eps - DMatrix::identity(r, r);
    ElasticityModel::new(
        b,
        DVector::zeros(r),
        CovarianceFactor::Diagonal(vec![0.0; r]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_elasticity_is_minus_one() {
        let m = gen_elasticity(1, 0.5, 3).unwrap();
        assert_eq!(m.b(), &DMatrix::from_element(1, 1, -1.0));
    }

    #[test]
    fn generated_b_is_symmetric_and_negative_definite() {
        for (r, seed) in [(2, 1), (16, 7), (40, 11)] {
            let m = gen_elasticity(r, 0.5, seed).unwrap();
            assert_eq!(m.b(), &m.b().transpose());
            // Eigen-solve oracle: λ_max((B+Bᵀ)/2) ≤ −0.5 + 1e-8.
            assert!(m.max_symmetric_eigenvalue() <= -0.5 + 1e-8, "r = {r}");
            // Off-diagonal entries are nonnegative.
            assert!(m.b().iter().enumerate().all(|(k, &v)| k % (r + 1) == 0 || v >= 0.0));
        }
    }

    #[test]
    fn perron_bound_brackets_the_eigenvalue() {
        let m = gen_elasticity(12, 0.5, 5).unwrap();
        let mut mm = (m.b() + DMatrix::identity(12, 12)) * 1.0;
        mm.fill_diagonal(0.0);
        let (hi, lo) = perron_bounds(&mm);
        let exact = mm.symmetric_eigenvalues().max();
        assert!(lo <= exact + 1e-14 && exact <= hi + 1e-14);
        assert!((hi - exact) / exact < 1e-10);
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(gen_elasticity(5, 0.5, 9).unwrap(), gen_elasticity(5, 0.5, 9).unwrap());
        assert_ne!(gen_elasticity(5, 0.5, 9).unwrap(), gen_elasticity(5, 0.5, 10).unwrap());
    }

    #[test]
    fn eps_fraction_is_checked() {
        assert!(gen_elasticity(3, 1.0, 0).is_err());
        assert!(gen_elasticity(3, 0.0, 0).is_err());
    }

    #[test]
    fn covariance_factorization_repairs_semidefinite_input() {
        // Rank-one covariance: Cholesky fails, eigen repair succeeds.
        let v = DVector::from_row_slice(&[1.0, 2.0, -1.0]);
        let sigma = &v * v.transpose();
        let f = CovarianceFactor::from_covariance(&sigma).unwrap();
        assert!((f.covariance() - &sigma).abs().max() < 1e-12);
        let spd = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = CovarianceFactor::from_covariance(&spd).unwrap();
        assert!((f.covariance() - &spd).abs().max() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(CovarianceFactor::from_covariance(&bad).is_err());
    }
}
