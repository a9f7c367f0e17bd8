//! Trust-region SQP for the sample-average pricing problem.
//!
//! Each iteration linearizes the commodity rows, takes a normal step toward
//! their feasible region, then improves the quadratic model of the objective
//! inside the trust region with projected Steihaug CG. Steps are judged on the
//! ℓ1 exact-penalty merit function.

mod kkt;
mod linalg;
mod merit;
mod subproblem;

use std::cell::Cell;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::evaluator::{EvalPath, Evaluator, FlowEvaluation};
use crate::problem::{ProblemInstance, ScenarioSet};

pub use kkt::{kkt_report, KktReport, ACTIVE_ROW_TOL};
pub use merit::{bound_violation_l1, merit, merit_value, tr_update, update_penalty, violation_l1};
pub use subproblem::{normal_step, qp_subproblem, LinearConstraints, SubproblemOptions, SubproblemResult};

/// Treatment of negative curvature met by CG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Follow the direction to the trust-region boundary.
    Exact,
    /// Add `τI`, doubling `τ` from `1e-8`, until CG sees positive curvature.
    Regularized,
}

impl std::str::FromStr for HessianMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Self::Exact),
            "regularized" => Ok(Self::Regularized),
            other => Err(format!("unknown hessian mode '{other}' (exact | regularized)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub delta0: f64,
    pub delta_max: f64,
    pub eta_accept: f64,
    pub shrink: f64,
    pub expand: f64,
    pub merit_penalty0: f64,
    /// Added to `‖γ‖_∞` when raising the penalty.
    pub penalty_margin: f64,
    pub hessian_mode: HessianMode,
    pub path: EvalPath,
    /// CG iteration cap per working set; 0 means `2n + 50`.
    pub cg_max_iter: usize,
    /// The radius below which the run stops.
    pub min_delta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-8,
            max_iter: 200,
            delta0: 1.0,
            delta_max: 1e3,
            eta_accept: 0.1,
            shrink: 0.25,
            expand: 2.0,
            merit_penalty0: 10.0,
            penalty_margin: 0.1,
            hessian_mode: HessianMode::Exact,
            path: EvalPath::Sparse,
            cg_max_iter: 0,
            min_delta: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("solver config: {what}")));
        if !(self.eta_accept > 0.0 && self.eta_accept < 1.0) {
            return bad("eta_accept must lie in (0, 1)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0 && self.expand > 1.0) {
            return bad("need 0 < shrink < 1 < expand");
        }
        if !(self.tol_kkt > 0.0 && self.min_delta > 0.0 && self.penalty_margin > 0.0) {
            return bad("tolerances and penalty margin must be positive");
        }
        if !(self.delta0 > 0.0 && self.delta0 <= self.delta_max && self.delta_max.is_finite()) {
            return bad("need 0 < delta0 <= delta_max < inf");
        }
        if !(self.merit_penalty0 >= 0.0 && self.merit_penalty0.is_finite()) {
            return bad("merit_penalty0 must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
    Infeasible,
    NumericalFailure,
    TrustRegionCollapsed,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::MaxIterations => "max-iterations",
            Self::Infeasible => "infeasible",
            Self::NumericalFailure => "numerical-failure",
            Self::TrustRegionCollapsed => "trust-region-collapsed",
        })
    }
}

/// One iteration; values refer to the iterate the step started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub violation: f64,
    pub kkt: f64,
    pub rho: f64,
    pub delta: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub penalty: f64,
    pub merit: f64,
    pub trial_merit: f64,
    pub cg_iterations: usize,
    /// Seconds since the solve started.
    pub wall_time: f64,
    /// Seconds spent in evaluator kernels and Hessian products so far.
    pub kernel_time: f64,
}

mod dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    #[serde(with = "dvec")]
    pub p: DVector<f64>,
    /// Commodity-row multipliers.
    #[serde(with = "dvec")]
    pub gamma: DVector<f64>,
    /// Signed bound multipliers: `∇f + ∇cᵀγ + gamma_bounds ≈ 0`.
    #[serde(with = "dvec")]
    pub gamma_bounds: DVector<f64>,
    pub delta: f64,
    pub iter: usize,
    pub status: Status,
    pub objective: f64,
    #[serde(with = "dvec")]
    pub constraint: DVector<f64>,
    pub kkt: KktReport,
    pub penalty: f64,
    pub trace: Vec<TraceRecord>,
    pub wall_time: f64,
    pub kernel_time: f64,
}

impl SolverState {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn violation(&self) -> f64 {
        self.kkt.feasibility
    }
}

struct Point {
    p: DVector<f64>,
    flows: FlowEvaluation,
    f: f64,
    c: DVector<f64>,
    g: DVector<f64>,
    jac: DMatrix<f64>,
}

impl Point {
    fn violation(&self) -> f64 {
        violation_l1(&self.c)
    }
}

struct Kernel<'a> {
    ev: Evaluator<'a>,
    path: EvalPath,
    time: Cell<Duration>,
}

impl Kernel<'_> {
    fn timed<T>(&self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.time.set(self.time.get() + t.elapsed());
        out
    }

    fn flows(&self, p: DVector<f64>) -> Result<(DVector<f64>, FlowEvaluation, f64, DVector<f64>)> {
        self.timed(|| {
            let flows = self.ev.flows(&p)?;
            let f = self.ev.objective(&flows);
            let c = self.ev.constraint(&flows);
            if !f.is_finite() || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite objective or constraint".into()));
            }
            Ok((p, flows, f, c))
        })
    }

    fn complete(&self, (p, flows, f, c): (DVector<f64>, FlowEvaluation, f64, DVector<f64>)) -> Result<Point> {
        self.timed(|| {
            let g = self.ev.grad_f(&flows, self.path);
            let jac = match self.path {
                EvalPath::Dense => self.ev.grad_c_dense(&flows),
                EvalPath::Sparse => self.ev.grad_c(&flows),
            };
            if g.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite derivative".into()));
            }
            Ok(Point { p, flows, f, c, g, jac })
        })
    }
}

fn clip(p: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(p.len(), (0..p.len()).map(|i| p[i].clamp(lower[i], upper[i])))
}

/// Runs the trust-region SQP loop from `p0`, or from the box midpoint.
///
/// Returns `Err` only for invalid input; run outcomes are reported through
/// [`SolverState::status`].
pub fn solve(
    inst: &ProblemInstance,
    scen: &ScenarioSet,
    cfg: &SolverConfig,
    p0: Option<&DVector<f64>>,
) -> Result<SolverState> {
    cfg.validate()?;
    let n = inst.route_count();
    let (lower, upper) = (inst.p_lower(), inst.p_upper());
    let p_start = match p0 {
        Some(p) => {
            check_len("initial price", p.len(), n)?;
            if (0..n).any(|i| !(p[i] >= lower[i] && p[i] <= upper[i])) {
                return Err(Error::Domain("initial price lies outside [p_l, p_u]".into()));
            }
            p.clone()
        }
        None => inst.midpoint(),
    };
    let start = Instant::now();
    let kernel = Kernel {
        ev: Evaluator::new(inst, scen)?,
        path: cfg.path,
        time: Cell::new(Duration::ZERO),
    };
    let mut delta = cfg.delta0;
    let mut penalty = cfg.merit_penalty0;
    let mut trace = Vec::new();
    let opts = SubproblemOptions {
        cg_rel_tol: 1e-14,
        cg_abs_tol: 0.0,
        max_cg_iter: cfg.cg_max_iter,
        regularize: cfg.hessian_mode == HessianMode::Regularized,
    };

    let mut point = match kernel.flows(p_start).and_then(|v| kernel.complete(v)) {
        Ok(pt) => pt,
        Err(e) => {
            log::warn!("evaluation failed at the initial point: {e}");
            let p = p0.cloned().unwrap_or_else(|| inst.midpoint());
            let m = inst.commodity_count();
            return Ok(SolverState {
                gamma: DVector::zeros(m),
                gamma_bounds: DVector::zeros(n),
                delta,
                iter: 0,
                status: Status::NumericalFailure,
                objective: f64::NAN,
                constraint: DVector::from_element(m, f64::NAN),
                kkt: KktReport {
                    stationarity: f64::NAN,
                    feasibility: f64::NAN,
                    complementarity: f64::NAN,
                },
                p,
                penalty,
                trace,
                wall_time: start.elapsed().as_secs_f64(),
                kernel_time: kernel.time.get().as_secs_f64(),
            });
        }
    };
    let (mut kkt, mut gamma, mut gamma_b) = kkt_report(&point.p, &point.g, &point.c, &point.jac, lower, upper);
    let mut status = Status::MaxIterations;
    let mut iter = 0;
    while iter < cfg.max_iter {
        if kkt.satisfied(cfg.tol_kkt) {
            status = Status::Converged;
            break;
        }
        if delta < cfg.min_delta {
            status = Status::TrustRegionCollapsed;
            break;
        }
        iter += 1;
        let box_lo = lower - &point.p;
        let box_hi = upper - &point.p;

        // Normal step toward the linearized feasible region.
        let v_full = normal_step(&point.c, &point.jac, &box_lo, &box_hi);
        let v_norm = v_full.norm();
        let v = if v_norm > 0.8 * delta {
            &v_full * (0.8 * delta / v_norm)
        } else {
            v_full.clone()
        };
        let viol = point.violation();
        let lin_progress = viol - violation_l1(&(&point.c + &point.jac * &v_full));
        let target = (&point.c + &point.jac * &v).map(|t| t.max(0.0));
        let cons = LinearConstraints {
            jac: point.jac.clone(),
            rhs: target - &point.c,
            lower: box_lo,
            upper: box_hi,
        };

        let hess = kernel.timed(|| kernel.ev.hessian_operator(&point.flows, cfg.path));
        let hess_apply = |x: &DVector<f64>| kernel.timed(|| hess.apply(x));
        let opts = SubproblemOptions {
            cg_abs_tol: 0.01 * cfg.tol_kkt * (1.0 + point.g.norm()),
            ..opts
        };
        let sub = qp_subproblem(&point.g, &hess_apply, &cons, delta, Some(&v), opts);
        let d = sub.step;
        let step_norm = d.norm();

        // Penalty large enough to make the step a descent direction of the merit.
        let lin_viol = violation_l1(&(&point.c + &point.jac * &d));
        let vred = viol - lin_viol;
        let model_change = -sub.predicted_reduction;
        penalty = update_penalty(penalty, &gamma, cfg.penalty_margin);
        penalty = update_penalty(penalty, &sub.row_multipliers, cfg.penalty_margin);
        if vred > 0.0 && model_change > 0.0 {
            penalty = penalty.max(model_change / (0.9 * vred));
        }
        let pred = -model_change + penalty * vred;
        let phi = merit_value(point.f, viol, penalty);

        let trial = clip(&(&point.p + &d), lower, upper);
        let trial_eval = kernel.flows(trial);
        let (rho, trial_phi) = match &trial_eval {
            Ok((_, _, f, c)) => {
                let trial_phi = merit_value(*f, violation_l1(c), penalty);
                let ared = phi - trial_phi;
                let noise = 100.0 * f64::EPSILON * (1.0 + phi.abs());
                let rho = if pred.abs() <= noise {
                    if ared >= -noise {
                        1.0
                    } else {
                        -1.0
                    }
                } else if pred < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    ared / pred
                };
                (rho, trial_phi)
            }
            Err(_) => (f64::NAN, f64::NAN),
        };
        let accepted = rho >= cfg.eta_accept && step_norm > 0.0;
        let negligible = step_norm <= 1e-14 * (1.0 + point.p.norm());
        trace.push(TraceRecord {
            iter,
            objective: point.f,
            violation: viol,
            kkt: kkt.residual(),
            rho,
            delta,
            step_norm,
            accepted,
            penalty,
            merit: phi,
            trial_merit: trial_phi,
            cg_iterations: sub.cg_iterations,
            wall_time: start.elapsed().as_secs_f64(),
            kernel_time: kernel.time.get().as_secs_f64(),
        });
        log::debug!(
            "iter {iter}: f {:.6e} viol {viol:.3e} kkt {:.3e} rho {rho:.3} delta {delta:.3e} |d| {step_norm:.3e}",
            point.f,
            kkt.residual()
        );
        delta = tr_update(rho, delta, step_norm, cfg);

        let stuck = viol > cfg.tol_kkt && lin_progress <= cfg.tol_kkt * (1.0 + viol);
        if accepted {
            match trial_eval.and_then(|v| kernel.complete(v)) {
                Ok(pt) => point = pt,
                Err(e) => {
                    log::warn!("derivative evaluation failed: {e}");
                    status = Status::NumericalFailure;
                    break;
                }
            }
            (kkt, gamma, gamma_b) = kkt_report(&point.p, &point.g, &point.c, &point.jac, lower, upper);
        } else if trial_eval.is_err() && delta < cfg.min_delta {
            status = Status::NumericalFailure;
            break;
        } else if stuck && negligible {
            status = Status::Infeasible;
            break;
        }
    }
    if matches!(status, Status::MaxIterations | Status::TrustRegionCollapsed) {
        let v_full = normal_step(&point.c, &point.jac, &(lower - &point.p), &(upper - &point.p));
        let viol = point.violation();
        let lin_progress = viol - violation_l1(&(&point.c + &point.jac * &v_full));
        if viol > cfg.tol_kkt && lin_progress <= cfg.tol_kkt * (1.0 + viol) {
            status = Status::Infeasible;
        }
    }
    log::info!("solver finished: {status} after {iter} iterations, kkt {:.3e}", kkt.residual());
    Ok(SolverState {
        p: point.p,
        gamma,
        gamma_bounds: gamma_b,
        delta,
        iter,
        status,
        objective: point.f,
        constraint: point.c,
        kkt,
        penalty,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
        kernel_time: kernel.time.get().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests;
