use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

/// Largest route count for which `Q` may be formed densely for diagnostics.
pub const DEFAULT_DENSE_CAP: usize = 256;

/// `λ_min(Q)·σ_min(B)²` for a symmetric `q`.
///
/// When `λ_min(Q) = 0` (always the case if there are fewer edges than
/// routes) the masked Hessian `Bᵀ·(1/N)ΣJQJ·B` is bounded below by this
/// value for every 0/1 diagonal `J`. For positive definite `Q` the bound
/// fails at `J = 0`, and for indefinite `Q` the sharp lower bound involves
/// `σ_max(B)` instead; callers should not read more into the value.
pub fn convexity_threshold_for(q: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let sym = (q + q.transpose()) * 0.5;
    let lam = sym.symmetric_eigenvalues().min();
    let sigma = b.singular_values().min();
    lam * sigma * sigma
}

/// [`convexity_threshold_for`] on the instance's own `Q` and `B`.
pub fn convexity_threshold(inst: &ProblemInstance, cap: usize) -> Result<f64> {
    if inst.route_count() > cap {
        return Err(Error::Capability(format!(
            "{} routes exceed the dense cap {cap}; the convexity bound needs a dense eigen-solve, \
             use it on small instances or the dense oracle only",
            inst.route_count()
        )));
    }
    Ok(convexity_threshold_for(&inst.cost().q_dense(), inst.elasticity().b()))
}
