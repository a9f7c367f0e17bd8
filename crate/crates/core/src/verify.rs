//! Derivative and parity checks at one price vector, bundled for the
//! command line and the acceptance suite.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evaluator::{EvalPath, Evaluator, FlowEvaluation};
use crate::oracle::{
    check_gradient, check_hessian, constraint_curvature, dense_reference, relative_error, safe_distance, FdReport,
    REFERENCE_CAP,
};
use crate::problem::{ProblemInstance, ScenarioSet};

pub const GRADIENT_FD_TOL: f64 = 1e-5;
pub const HESSIAN_FD_TOL: f64 = 1e-4;
pub const PARITY_TOL: f64 = 1e-10;
pub const CURVATURE_TOL: f64 = 1e-6;

/// Where the checked point comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointSource {
    /// Uniform in the price box, redrawn until no flow is near a kink.
    Random { seed: u64, max_tries: usize },
    Midpoint,
    Given { p: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub point: PointSource,
    pub gradient_step: f64,
    pub hessian_step: f64,
    /// Hessian finite differences cost one gradient pair per route; skipped
    /// above this size.
    pub hessian_cap: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            point: PointSource::Random { seed: 0, max_tries: 200 },
            gradient_step: 1e-6,
            hessian_step: 1e-5,
            hessian_cap: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
    /// Checks that cannot be trusted at this point (a finite difference
    /// across a kink) are reported but not counted.
    pub counted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd: Option<FdReport>,
}

impl Check {
    fn new(name: &str, value: f64, tol: f64, counted: bool, fd: Option<FdReport>) -> Self {
        Self {
            name: name.to_string(),
            value,
            tol,
            pass: value <= tol,
            counted,
            fd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub p: Vec<f64>,
    pub boundary_distance: f64,
    /// Distance a central difference needs to stay clear of every kink.
    pub safe_distance: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.counted && !c.pass)
    }
}

fn choose_point(ev: &Evaluator, cfg: &VerifyConfig) -> Result<(DVector<f64>, FlowEvaluation)> {
    let inst = ev.instance();
    match &cfg.point {
        PointSource::Random { seed, max_tries } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let min_dist = safe_distance(inst, cfg.gradient_step.max(cfg.hessian_step));
            let mut best: Option<(DVector<f64>, FlowEvaluation)> = None;
            for _ in 0..(*max_tries).max(1) {
                let p = DVector::from_iterator(
                    inst.route_count(),
                    inst.p_lower().iter().zip(inst.p_upper().iter()).map(|(&lo, &hi)| {
                        let (lo, hi) = (lo.max(-1e3), hi.min(1e3));
                        lo + (hi - lo) * rng.random::<f64>()
                    }),
                );
                let flows = ev.flows(&p)?;
                if flows.boundary_distance() >= min_dist {
                    return Ok((p, flows));
                }
                if best.as_ref().is_none_or(|(_, f)| flows.boundary_distance() > f.boundary_distance()) {
                    best = Some((p, flows));
                }
            }
            Ok(best.expect("at least one draw"))
        }
        PointSource::Midpoint => {
            let p = inst.midpoint();
            let flows = ev.flows(&p)?;
            Ok((p, flows))
        }
        PointSource::Given { p } => {
            let p = DVector::from_column_slice(p);
            let flows = ev.flows(&p)?;
            Ok((p, flows))
        }
    }
}

/// Finite-difference checks of both gradient paths and the Hessian, the
/// constraint curvature, and parity of both paths with the dense reference
/// when the instance is small enough.
pub fn verify(inst: &ProblemInstance, scen: &ScenarioSet, cfg: &VerifyConfig) -> Result<VerifyReport> {
    let ev = Evaluator::new(inst, scen)?;
    let (p, flows) = choose_point(&ev, cfg)?;
    let safe = safe_distance(inst, cfg.gradient_step.max(cfg.hessian_step));
    let smooth = flows.boundary_distance() >= safe;
    let mut checks = Vec::new();

    for path in [EvalPath::Sparse, EvalPath::Dense] {
        let fd = check_gradient(&ev, &flows, path, cfg.gradient_step)?;
        checks.push(Check::new(&format!("gradient_fd_{path}"), fd.max_rel_error, GRADIENT_FD_TOL, smooth, Some(fd)));
    }
    if inst.route_count() <= cfg.hessian_cap {
        let fd = check_hessian(&ev, &flows, EvalPath::Sparse, cfg.hessian_step)?;
        checks.push(Check::new("hessian_fd_sparse", fd.max_rel_error, HESSIAN_FD_TOL, smooth, Some(fd)));
        let curvature = constraint_curvature(&ev, &p, cfg.hessian_step)?;
        checks.push(Check::new("constraint_curvature_fd", curvature, CURVATURE_TOL, smooth, None));
    }

    if inst.route_count() <= REFERENCE_CAP {
        let reference = dense_reference(inst, scen, &p)?;
        let ref_h = reference.hessian_matrix().expect("reference carries a Hessian");
        let ref_j = reference.jacobian_matrix();
        let objective_gap = (ev.objective(&flows) - reference.objective).abs() / reference.objective.abs().max(1.0);
        checks.push(Check::new("objective_parity", objective_gap, PARITY_TOL, true, None));
        let (c_err, _) = relative_error(ev.constraint(&flows).as_slice(), &reference.constraint);
        checks.push(Check::new("constraint_parity", c_err, PARITY_TOL, true, None));
        for path in [EvalPath::Sparse, EvalPath::Dense] {
            let (g, _) = relative_error(ev.grad_f(&flows, path).as_slice(), &reference.gradient);
            checks.push(Check::new(&format!("gradient_parity_{path}"), g, PARITY_TOL, true, None));
            let (h, _) = relative_error(ev.hess_f(&flows, path).as_slice(), ref_h.as_slice());
            checks.push(Check::new(&format!("hessian_parity_{path}"), h, PARITY_TOL, true, None));
        }
        let (j, _) = relative_error(ev.grad_c(&flows).as_slice(), ref_j.as_slice());
        checks.push(Check::new("jacobian_parity_sparse", j, PARITY_TOL, true, None));
        let (j, _) = relative_error(ev.grad_c_dense(&flows).as_slice(), ref_j.as_slice());
        checks.push(Check::new("jacobian_parity_dense", j, PARITY_TOL, true, None));
    }

    // A run in which nothing could be checked does not pass.
    let pass = checks.iter().all(|c| !c.counted || c.pass) && checks.iter().any(|c| c.counted);
    Ok(VerifyReport {
        p: p.as_slice().to_vec(),
        boundary_distance: flows.boundary_distance(),
        safe_distance: safe,
        checks,
        pass,
    })
}
