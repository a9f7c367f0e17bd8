//! Independent checks for the evaluator: finite differences, a dense
//! reference implementation written with explicit loops, and closed-form
//! moments of the censored normal.
//!
//! Nothing here calls the evaluator's kernels; the only shared code is the
//! instance data itself.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{check_len, Error, Result};
use crate::evaluator::{EvalPath, EvalReport, EvalTimings, Evaluator, FlowEvaluation};
use crate::problem::{ProblemInstance, ScenarioSet};

/// Largest route count accepted by [`dense_reference`].
pub const REFERENCE_CAP: usize = 256;

/// Outcome of comparing an analytic derivative with finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    /// `max_j |fd_j − a_j| / max(‖a‖∞, 1e-300)`.
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Smallest distance of any pre-projection flow to `{0, x_u}` at the base
    /// point.
    pub boundary_proximity: f64,
    pub step: f64,
}

/// Central differences `(f(p + h·e_j) − f(p − h·e_j)) / 2h`.
pub fn fd_gradient<F>(f: F, p: &DVector<f64>, step: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    DVector::from_iterator(
        p.len(),
        (0..p.len()).map(|j| {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[j] += step;
            minus[j] -= step;
            (f(&plus) - f(&minus)) / (2.0 * step)
        }),
    )
}

/// Central-difference Jacobian of a vector function; column `j` is the
/// derivative along `e_j`.
pub fn fd_jacobian<F>(f: F, p: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let cols: Vec<DVector<f64>> = (0..p.len())
        .map(|j| {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[j] += step;
            minus[j] -= step;
            (f(&plus) - f(&minus)) / (2.0 * step)
        })
        .collect();
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, p.len(), |i, j| cols[j][i])
}

/// Largest entrywise deviation relative to the largest analytic entry.
pub fn relative_error(fd: &[f64], analytic: &[f64]) -> (f64, usize) {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    fd.iter()
        .zip(analytic)
        .map(|(a, b)| (a - b).abs() / scale)
        .enumerate()
        .fold((0.0, 0), |(best, k), (j, e)| if e > best { (e, j) } else { (best, k) })
}

/// Minimum boundary distance for which a central difference of width `step`
/// cannot cross a projection kink.
pub fn safe_distance(inst: &ProblemInstance, step: f64) -> f64 {
    10.0 * step * inst.elasticity().b().singular_values().max()
}

/// Draws points from `sample` until one keeps every pre-projection flow at
/// least [`safe_distance`] from a kink. Gives up after `max_tries`.
pub fn draw_smooth_point<S>(
    ev: &Evaluator,
    step: f64,
    max_tries: usize,
    mut sample: S,
) -> Result<Option<(DVector<f64>, FlowEvaluation)>>
where
    S: FnMut() -> DVector<f64>,
{
    let min_dist = safe_distance(ev.instance(), step);
    for _ in 0..max_tries {
        let p = sample();
        let flows = ev.flows(&p)?;
        if flows.boundary_distance() >= min_dist {
            return Ok(Some((p, flows)));
        }
    }
    Ok(None)
}

/// Finite differences of the objective against the gradient of `path`.
pub fn check_gradient(ev: &Evaluator, flows: &FlowEvaluation, path: EvalPath, step: f64) -> Result<FdReport> {
    let p = flows.p().clone();
    let analytic = ev.grad_f(flows, path);
    let fd = fd_gradient(|q| ev.flows(q).map(|f| ev.objective(&f)).unwrap_or(f64::NAN), &p, step);
    let (max_rel_error, worst_index) = relative_error(fd.as_slice(), analytic.as_slice());
    Ok(FdReport {
        max_rel_error,
        worst_index,
        boundary_proximity: flows.boundary_distance(),
        step,
    })
}

/// Finite differences of the gradient against the Hessian of `path`.
pub fn check_hessian(ev: &Evaluator, flows: &FlowEvaluation, path: EvalPath, step: f64) -> Result<FdReport> {
    let p = flows.p().clone();
    let analytic = ev.hess_f(flows, path);
    let fd = fd_jacobian(
        |q| match ev.flows(q) {
            Ok(f) => ev.grad_f(&f, path),
            Err(_) => DVector::from_element(q.len(), f64::NAN),
        },
        &p,
        step,
    );
    let (max_rel_error, worst_index) = relative_error(fd.as_slice(), analytic.as_slice());
    Ok(FdReport {
        max_rel_error,
        worst_index,
        boundary_proximity: flows.boundary_distance(),
        step,
    })
}

/// Finite differences of the constraint Jacobian; returns the largest
/// absolute entry, which is zero away from kinks.
pub fn constraint_curvature(ev: &Evaluator, p: &DVector<f64>, step: f64) -> Result<f64> {
    let r = p.len();
    let k = ev.instance().commodity_count();
    let flat = |q: &DVector<f64>| match ev.flows(q) {
        Ok(f) => DVector::from_column_slice(ev.grad_c(&f).as_slice()),
        Err(_) => DVector::from_element(k * r, f64::NAN),
    };
    Ok(fd_jacobian(flat, p, step).amax())
}

/// `E[proj_[0, u](Z)]` for `Z ~ N(mu, sigma²)`; `u` may be infinite.
pub fn censored_normal_mean(mu: f64, sigma: f64, upper: f64) -> f64 {
    if sigma == 0.0 {
        return mu.clamp(0.0, upper);
    }
    // E[(Z − a)⁺] = (mu − a)·Φ((mu − a)/σ) + σ·φ((mu − a)/σ).
    let excess = |a: f64| {
        if a.is_infinite() {
            return 0.0;
        }
        let z = (mu - a) / sigma;
        let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        (mu - a) * cdf + sigma * pdf
    };
    excess(0.0) - excess(upper)
}

/// Ground-truth evaluation with dense `Q = 2·A·Diag(c_coe)·Aᵀ` and explicit
/// per-sample loops.
pub fn dense_reference(inst: &ProblemInstance, scen: &ScenarioSet, p: &DVector<f64>) -> Result<EvalReport> {
    dense_reference_capped(inst, scen, p, REFERENCE_CAP)
}

pub fn dense_reference_capped(
    inst: &ProblemInstance,
    scen: &ScenarioSet,
    p: &DVector<f64>,
    cap: usize,
) -> Result<EvalReport> {
    let r = inst.route_count();
    if r > cap {
        return Err(Error::Capability(format!(
            "dense reference is limited to {cap} routes, instance has {r}"
        )));
    }
    check_len("price vector", p.len(), r)?;
    check_len("scenario rows", scen.dim(), r)?;
    let m = inst.edge_count();
    let n = scen.count();
    let nf = n as f64;

    let mut a = vec![vec![0.0; m]; r];
    for (j, route) in inst.routes().routes().iter().enumerate() {
        for &e in route {
            a[j][e] = 1.0;
        }
    }
    let coe = inst.cost().coe();
    let mut q = vec![vec![0.0; r]; r];
    for j in 0..r {
        for k in 0..r {
            let mut v = 0.0;
            for e in 0..m {
                v += a[j][e] * coe[e] * a[k][e];
            }
            q[j][k] = 2.0 * v;
        }
    }
    let s: Vec<f64> = inst.cost().linear().iter().copied().collect();
    let b = inst.elasticity().b();
    let kdense = inst.commodity().matrix().to_dense();
    let kc = kdense.nrows();
    let xu = inst.x_upper();
    let lambda = inst.lambda();

    let mut objective = 0.0;
    let mut mean_x = vec![0.0; r];
    let mut grad_sum = vec![0.0; r];
    let mut jac_sum = vec![vec![0.0; r]; kc];
    let mut h_inner = vec![vec![0.0; r]; r];
    for i in 0..n {
        let mut x = vec![0.0; r];
        let mut w = vec![0.0; r];
        for j in 0..r {
            let mut y = scen.xi()[(j, i)];
            for k in 0..r {
                y += b[(j, k)] * p[k];
            }
            x[j] = y.max(0.0).min(xu[j]);
            w[j] = if y > 0.0 && y < xu[j] { 1.0 } else { 0.0 };
        }
        let mut qx = vec![0.0; r];
        for j in 0..r {
            for k in 0..r {
                qx[j] += q[j][k] * x[k];
            }
        }
        for j in 0..r {
            objective += (0.5 * qx[j] * x[j] - s[j] * x[j]) / nf;
            mean_x[j] += x[j] / nf;
        }
        // Bᵀ·J·(Qx − s)
        for c in 0..r {
            let mut v = 0.0;
            for j in 0..r {
                v += b[(j, c)] * w[j] * (qx[j] - s[j]);
            }
            grad_sum[c] += v;
        }
        // K·J·B
        for row in 0..kc {
            for c in 0..r {
                let mut v = 0.0;
                for j in 0..r {
                    v += kdense[(row, j)] * w[j] * b[(j, c)];
                }
                jac_sum[row][c] += v;
            }
        }
        // J·Q·J
        for j in 0..r {
            for k in 0..r {
                h_inner[j][k] += w[j] * q[j][k] * w[k];
            }
        }
    }
    objective += 0.5 * lambda * p.iter().map(|v| v * v).sum::<f64>();

    let constraint = DVector::from_iterator(
        kc,
        (0..kc).map(|row| {
            let mut v = inst.commodity().demand_lower()[row];
            for j in 0..r {
                v -= kdense[(row, j)] * mean_x[j];
            }
            v
        }),
    );
    let gradient = DVector::from_iterator(r, (0..r).map(|c| lambda * p[c] + grad_sum[c] / nf));
    let jacobian = DMatrix::from_fn(kc, r, |row, c| -jac_sum[row][c] / nf);
    // Bᵀ·H·B
    let mut hb = vec![vec![0.0; r]; r];
    for j in 0..r {
        for c in 0..r {
            let mut v = 0.0;
            for k in 0..r {
                v += h_inner[j][k] * b[(k, c)];
            }
            hb[j][c] = v;
        }
    }
    let hessian = DMatrix::from_fn(r, r, |row, c| {
        let mut v = 0.0;
        for j in 0..r {
            v += b[(j, row)] * hb[j][c];
        }
        v / nf + if row == c { lambda } else { 0.0 }
    });
    Ok(EvalReport::new(
        objective,
        constraint,
        gradient,
        jacobian,
        Some(hessian),
        EvalPath::Dense,
        EvalTimings::default(),
    ))
}
