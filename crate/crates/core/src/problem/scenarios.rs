use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::ElasticityModel;
use crate::error::{Error, Result};

/// `N` noise draws stored column-wise (`|routes| × N`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    xi: DMatrix<f64>,
    seed: u64,
}

impl ScenarioSet {
    /// Wraps explicit noise columns; fixtures use this for hand-picked ζ.
    pub fn from_columns(xi: DMatrix<f64>, seed: u64) -> Result<Self> {
        if xi.ncols() == 0 {
            return Err(Error::Domain("a scenario set needs at least one column".into()));
        }
        Ok(Self { xi, seed })
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.xi.ncols()
    }

    pub fn dim(&self) -> usize {
        self.xi.nrows()
    }
}

/// Generator for column `i`: ChaCha8 keyed by `seed`, stream `i`. Each column
/// therefore depends only on `(seed, i)`.
pub fn column_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Draws `Ξ[:, i] = μ + L·z⁽ⁱ⁾` with `z⁽ⁱ⁾` standard normal.
pub fn sample_scenarios(model: &ElasticityModel, n: usize, seed: u64) -> Result<ScenarioSet> {
    if n == 0 {
        return Err(Error::Domain("scenario count must be positive".into()));
    }
    let dim = model.dim();
    let latent = model.factor().latent_dim();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = column_rng(seed, i);
            let z: Vec<f64> = (0..latent).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut col = vec![0.0; dim];
            model.factor().apply(&z, &mut col);
            for (c, m) in col.iter_mut().zip(model.mu().iter()) {
                *c += m;
            }
            col
        })
        .collect();
    let mut xi = DMatrix::zeros(dim, n);
    for (i, col) in columns.iter().enumerate() {
        xi.column_mut(i).copy_from_slice(col);
    }
    Ok(ScenarioSet { xi, seed })
}
