use nalgebra::DMatrix;

use super::{block_reduce, FlowEvaluation};
use crate::problem::ProblemInstance;

/// `Σᵢ Diag(ωᵢ)·(Q·xᵢ − s)`, one dense product `Q·xᵢ` per sample.
pub(super) fn masked_residual_sum(
    inst: &ProblemInstance,
    q: &DMatrix<f64>,
    flows: &FlowEvaluation,
) -> Vec<f64> {
    let r = inst.route_count();
    let s = inst.cost().linear();
    block_reduce(flows.sample_count(), r, |range, acc| {
        for i in range {
            let qx = q * flows.x().column(i);
            let w = flows.omega().column(i);
            for j in 0..r {
                acc[j] += w[j] * (qx[j] - s[j]);
            }
        }
    })
}

/// `Σᵢ Diag(ωᵢ)·Q·Diag(ωᵢ)`, accumulated sample by sample over the full
/// `|ℛ| × |ℛ|` matrix.
pub(super) fn hessian_inner(q: &DMatrix<f64>, flows: &FlowEvaluation) -> DMatrix<f64> {
    let r = q.nrows();
    let omega = flows.omega();
    let sum = block_reduce(flows.sample_count(), r * r, |range, acc| {
        for i in range {
            let w = omega.column(i);
            for k in 0..r {
                if w[k] == 0.0 {
                    continue;
                }
                let col = q.column(k);
                let out = &mut acc[k * r..(k + 1) * r];
                for j in 0..r {
                    out[j] += w[j] * col[j];
                }
            }
        }
    });
    DMatrix::from_vec(r, r, sum)
}
