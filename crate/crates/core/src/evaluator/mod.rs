//! Sample-average objective, constraint, and derivatives at a price vector.
//!
//! Two implementations share the flow computation: a dense path that forms
//! `Q` and works with full per-sample vectors, and a sparse path that only
//! touches the active routes of each sample and the edges they use. The
//! sparse Hessian is `Q ∘ ΩΩᵀ` on the pattern of `Q`, with the co-activity
//! counts taken from bit-packed rows of `Ω`. Per-sample work runs in parallel
//! over fixed blocks of samples; block partial sums are combined in block
//! order, so results do not depend on the thread count.

mod convexity;
mod dense;
mod flows;
mod hessian;
mod report;
mod sparse;

use std::ops::Range;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::problem::{ProblemInstance, ScenarioSet};
use crate::sparse::CsrMatrix;

pub use convexity::{convexity_threshold, convexity_threshold_for, DEFAULT_DENSE_CAP};
pub use flows::{eval_flows, FlowEvaluation, BOUNDARY_REL_TOL};
pub use hessian::{HessianOperator, HessianZero};
pub use report::{EvalReport, EvalTimings};

/// Samples per reduction block.
pub(crate) const BLOCK: usize = 16;

/// Which kernel family produces derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPath {
    Dense,
    Sparse,
}

impl std::fmt::Display for EvalPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Dense => "dense",
            Self::Sparse => "sparse",
        })
    }
}

impl std::str::FromStr for EvalPath {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            other => Err(format!("unknown evaluation path '{other}' (dense | sparse)")),
        }
    }
}

/// Sums `f` over samples `0..n`. Each block of `BLOCK` samples accumulates
/// into its own buffer; buffers are added in block order.
pub(crate) fn block_reduce<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync,
{
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; dim];
            f(b * BLOCK..((b + 1) * BLOCK).min(n), &mut acc);
            acc
        })
        .collect();
    let mut out = vec![0.0; dim];
    for part in parts {
        for (o, v) in out.iter_mut().zip(part) {
            *o += v;
        }
    }
    out
}

/// Binds an instance to a scenario set and caches `Q`: dense for the dense
/// path, as a sparse pattern for the sparse Hessian.
pub struct Evaluator<'a> {
    inst: &'a ProblemInstance,
    scen: &'a ScenarioSet,
    q_dense: OnceLock<DMatrix<f64>>,
    q_sparse: OnceLock<CsrMatrix>,
}

impl<'a> Evaluator<'a> {
    pub fn new(inst: &'a ProblemInstance, scen: &'a ScenarioSet) -> Result<Self> {
        check_len("scenario rows", scen.dim(), inst.route_count())?;
        Ok(Self {
            inst,
            scen,
            q_dense: OnceLock::new(),
            q_sparse: OnceLock::new(),
        })
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.inst
    }

    pub fn scenarios(&self) -> &'a ScenarioSet {
        self.scen
    }

    pub(crate) fn q_dense(&self) -> &DMatrix<f64> {
        self.q_dense.get_or_init(|| self.inst.cost().q_dense())
    }

    pub(crate) fn q_sparse(&self) -> &CsrMatrix {
        self.q_sparse.get_or_init(|| self.inst.cost().q_sparse())
    }

    pub fn flows(&self, p: &DVector<f64>) -> Result<FlowEvaluation> {
        eval_flows(self.inst, self.scen, p)
    }

    /// `(λ/2)‖p‖² + (1/N)·Σᵢ [‖Ãᵀxᵢ‖² − ⟨s, xᵢ⟩]`.
    pub fn objective(&self, flows: &FlowEvaluation) -> f64 {
        let p = flows.p();
        let n = flows.sample_count();
        let total = block_reduce(n, 1, |range, acc| {
            let mut scratch = sparse::EdgeScratch::new(self.inst.edge_count());
            for i in range {
                acc[0] += sparse::sample_cost(self.inst, flows, i, &mut scratch);
            }
        })[0];
        0.5 * self.inst.lambda() * p.norm_squared() + total / n as f64
    }

    /// `l − K·mean(X)`; the constraint holds when every entry is ≤ 0.
    pub fn constraint(&self, flows: &FlowEvaluation) -> DVector<f64> {
        let n = flows.sample_count() as f64;
        let mean: Vec<f64> = (flows.x().column_sum() / n).iter().copied().collect();
        let k = self.inst.commodity().matrix().mul_vec(&mean);
        DVector::from_iterator(
            k.len(),
            self.inst
                .commodity()
                .demand_lower()
                .iter()
                .zip(k)
                .map(|(l, kx)| l - kx),
        )
    }

    pub fn grad_f(&self, flows: &FlowEvaluation, path: EvalPath) -> DVector<f64> {
        match path {
            EvalPath::Dense => self.grad_f_dense(flows),
            EvalPath::Sparse => self.grad_f_sparse(flows),
        }
    }

    /// Per-sample form: `λp + (1/N)·Bᵀ·Σᵢ Diag(ωᵢ)(Q·xᵢ − s)` with dense `Q`.
    pub fn grad_f_dense(&self, flows: &FlowEvaluation) -> DVector<f64> {
        let m = dense::masked_residual_sum(self.inst, self.q_dense(), flows);
        self.finish_gradient(flows, m)
    }

    /// Active-set form: per sample, gathers the edges used by the routes
    /// carrying flow, evaluates `2·Ã(Sᵢ,:)·u − s(Sᵢ)` on the active routes
    /// only, and scatters into the sum.
    pub fn grad_f_sparse(&self, flows: &FlowEvaluation) -> DVector<f64> {
        let m = sparse::masked_residual_sum(self.inst, flows);
        self.finish_gradient(flows, m)
    }

    fn finish_gradient(&self, flows: &FlowEvaluation, m: Vec<f64>) -> DVector<f64> {
        let n = flows.sample_count() as f64;
        let m = DVector::from_vec(m);
        let mut g = self.inst.elasticity().b().tr_mul(&m) / n;
        g.axpy(self.inst.lambda(), flows.p(), 1.0);
        g
    }

    /// `−(1/N)·K·Diag(d)·B`, one scaled row of `B` per nonzero of `K`.
    pub fn grad_c(&self, flows: &FlowEvaluation) -> DMatrix<f64> {
        let k = self.inst.commodity().matrix();
        let b = self.inst.elasticity().b();
        let d = flows.active_counts();
        let scale = -1.0 / flows.sample_count() as f64;
        let mut out = DMatrix::zeros(k.nrows(), b.ncols());
        for row in 0..k.nrows() {
            let (cols, vals) = k.row(row);
            for (&j, &kv) in cols.iter().zip(vals) {
                let w = scale * kv * d[j];
                if w != 0.0 {
                    for c in 0..b.ncols() {
                        out[(row, c)] += w * b[(j, c)];
                    }
                }
            }
        }
        out
    }

    /// Same quantity as [`Evaluator::grad_c`] from dense products.
    pub fn grad_c_dense(&self, flows: &FlowEvaluation) -> DMatrix<f64> {
        let k = self.inst.commodity().matrix().to_dense();
        let mut scaled = self.inst.elasticity().b().clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row *= flows.active_counts()[j];
        }
        (k * scaled) * (-1.0 / flows.sample_count() as f64)
    }

    /// `λI + (1/N)·Bᵀ·H·B` with `H = Σᵢ Diag(ωᵢ)·Q·Diag(ωᵢ)`, formed densely.
    pub fn hess_f(&self, flows: &FlowEvaluation, path: EvalPath) -> DMatrix<f64> {
        let b = self.inst.elasticity().b();
        let inner_b = match path {
            EvalPath::Dense => dense::hessian_inner(self.q_dense(), flows) * b,
            EvalPath::Sparse => sparse::hessian_inner(self.q_sparse(), flows).mul_dense(b),
        };
        let mut h = b.tr_mul(&inner_b) / flows.sample_count() as f64;
        for j in 0..h.nrows() {
            h[(j, j)] += self.inst.lambda();
        }
        (&h + h.transpose()) * 0.5
    }

    /// Hessian as an operator. The sparse path keeps the inner sum sparse and
    /// applies `B` and `Bᵀ` on each product instead of forming `Bᵀ·H·B`.
    pub fn hessian_operator<'b>(&'b self, flows: &'b FlowEvaluation, path: EvalPath) -> HessianOperator<'b> {
        match path {
            EvalPath::Dense => HessianOperator::dense(self.hess_f(flows, EvalPath::Dense)),
            EvalPath::Sparse => HessianOperator::Sparse {
                b: self.inst.elasticity().b(),
                inner: sparse::hessian_inner(self.q_sparse(), flows),
                lambda: self.inst.lambda(),
                samples: flows.sample_count(),
            },
        }
    }

    /// Curvature of the constraints, identically zero between kinks.
    pub fn hess_c(&self) -> HessianZero {
        HessianZero
    }

    /// Every quantity at `p`, with per-component wall-clock times.
    pub fn evaluate(&self, p: &DVector<f64>, path: EvalPath, with_hessian: bool) -> Result<EvalReport> {
        let t = Instant::now();
        let flows = self.flows(p)?;
        let flows_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let objective = self.objective(&flows);
        let objective_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let constraint = self.constraint(&flows);
        let constraint_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let gradient = self.grad_f(&flows, path);
        let gradient_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let jacobian = match path {
            EvalPath::Dense => self.grad_c_dense(&flows),
            EvalPath::Sparse => self.grad_c(&flows),
        };
        let jacobian_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let hessian = with_hessian.then(|| self.hess_f(&flows, path));
        let hessian_s = t.elapsed().as_secs_f64();
        Ok(EvalReport::new(
            objective,
            constraint,
            gradient,
            jacobian,
            hessian,
            path,
            EvalTimings {
                flows: flows_s,
                objective: objective_s,
                constraint: constraint_s,
                gradient: gradient_s,
                jacobian: jacobian_s,
                hessian: hessian_s,
            },
        ))
    }
}

#[cfg(test)]
mod tests;
