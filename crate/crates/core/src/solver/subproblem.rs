//! Trust-region quadratic subproblem with linear inequality rows and a box:
//!
//! ```text
//! min  gᵀd + ½ dᵀHd   s.t.  J·d ≤ rhs,  lower ≤ d ≤ upper,  ‖d‖₂ ≤ Δ
//! ```
//!
//! solved by an active-set loop around projected Steihaug–Toint CG.

use nalgebra::{DMatrix, DVector};

use super::linalg::{lstsq, NullSpaceProjector};

/// Linearized constraints on the step.
#[derive(Debug, Clone)]
pub struct LinearConstraints {
    pub jac: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl LinearConstraints {
    pub fn unconstrained(n: usize) -> Self {
        Self {
            jac: DMatrix::zeros(0, n),
            rhs: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn rows(&self) -> usize {
        self.jac.nrows()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SubproblemOptions {
    /// CG stops once the projected residual falls below
    /// `max(cg_rel_tol·‖r₀‖, cg_abs_tol)`.
    pub cg_rel_tol: f64,
    pub cg_abs_tol: f64,
    pub max_cg_iter: usize,
    /// Shift the model by `τI` on negative curvature instead of stepping to
    /// the trust-region boundary.
    pub regularize: bool,
}

impl Default for SubproblemOptions {
    fn default() -> Self {
        Self {
            cg_rel_tol: 1e-14,
            cg_abs_tol: 0.0,
            max_cg_iter: 0,
            regularize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemResult {
    pub step: DVector<f64>,
    /// `−(gᵀd + ½dᵀHd)` with the unshifted `H`.
    pub predicted_reduction: f64,
    /// Least-squares multipliers of the rows (zero for rows not held active).
    pub row_multipliers: DVector<f64>,
    /// Signed multipliers of the box: `g + Hd + Jᵀλ + bound_multipliers ≈ 0`.
    pub bound_multipliers: DVector<f64>,
    pub hit_boundary: bool,
    pub negative_curvature: bool,
    /// Final `τ` of the `τI` shift.
    pub shift: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Blocker {
    Bound(usize, Side),
    Row(usize),
}

enum CgExit {
    Converged,
    Boundary,
    Blocked(Blocker),
    NegativeCurvature,
}

struct WorkingSet {
    fixed: Vec<Option<Side>>,
    rows: Vec<bool>,
}

impl WorkingSet {
    fn projector(&self, jac: &DMatrix<f64>) -> (NullSpaceProjector, Vec<usize>) {
        let free = self.fixed.iter().map(Option::is_none).collect();
        let idx: Vec<usize> = (0..self.rows.len()).filter(|&j| self.rows[j]).collect();
        let rows: Vec<DVector<f64>> = idx.iter().map(|&j| jac.row(j).transpose()).collect();
        (NullSpaceProjector::new(free, &rows), idx)
    }
}

fn boundary_root(d: &DVector<f64>, p: &DVector<f64>, delta: f64) -> f64 {
    let a = p.norm_squared();
    if a == 0.0 {
        return f64::INFINITY;
    }
    let b = 2.0 * d.dot(p);
    let c = d.norm_squared() - delta * delta;
    if c >= 0.0 {
        return 0.0;
    }
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    // Numerically stable positive root of a·α² + b·α + c with c < 0.
    if b >= 0.0 {
        (-2.0 * c) / (b + disc)
    } else {
        (-b + disc) / (2.0 * a)
    }
}

struct Ctx<'a> {
    g: &'a DVector<f64>,
    hess: &'a dyn Fn(&DVector<f64>) -> DVector<f64>,
    cons: &'a LinearConstraints,
    delta: f64,
    opts: SubproblemOptions,
    shift: f64,
    cg_iterations: usize,
}

impl Ctx<'_> {
    fn h(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = (self.hess)(v);
        if self.shift > 0.0 {
            out.axpy(self.shift, v, 1.0);
        }
        out
    }

    fn ratio_test(&self, ws: &WorkingSet, d: &DVector<f64>, p: &DVector<f64>) -> (f64, Option<Blocker>) {
        let mut best = (f64::INFINITY, None);
        let cons = self.cons;
        for i in 0..d.len() {
            if ws.fixed[i].is_some() || p[i] == 0.0 {
                continue;
            }
            let (alpha, side) = if p[i] < 0.0 {
                ((cons.lower[i] - d[i]) / p[i], Side::Lower)
            } else {
                ((cons.upper[i] - d[i]) / p[i], Side::Upper)
            };
            if alpha.is_finite() && alpha.max(0.0) < best.0 {
                best = (alpha.max(0.0), Some(Blocker::Bound(i, side)));
            }
        }
        let pn = p.norm();
        for j in 0..cons.rows() {
            if ws.rows[j] {
                continue;
            }
            let row = cons.jac.row(j);
            let jp = row.dot(&p.transpose());
            if jp > 1e-14 * row.norm() * pn {
                let slack = (cons.rhs[j] - row.dot(&d.transpose())).max(0.0);
                let alpha = slack / jp;
                if alpha < best.0 {
                    best = (alpha, Some(Blocker::Row(j)));
                }
            }
        }
        best
    }

    /// Projected Steihaug–Toint CG from `d` on the current working set.
    fn steihaug(&mut self, ws: &WorkingSet, proj: &NullSpaceProjector, d: &mut DVector<f64>) -> CgExit {
        let n = d.len();
        let max_iter = if self.opts.max_cg_iter > 0 {
            self.opts.max_cg_iter
        } else {
            2 * n + 50
        };
        let full = self.g + self.h(d);
        let mut r = proj.project(&full);
        let r0 = r.norm();
        // Below this the projected residual is rounding noise from the
        // part of the gradient that lies in the constraint row space.
        let noise = 100.0 * f64::EPSILON * full.norm();
        let tol = (self.opts.cg_rel_tol * r0).max(self.opts.cg_abs_tol).max(noise);
        if r0 <= tol || r0 == 0.0 {
            return CgExit::Converged;
        }
        let mut p = -&r;
        let mut rr = r.norm_squared();
        for _ in 0..max_iter {
            self.cg_iterations += 1;
            let hp = self.h(&p);
            let kappa = p.dot(&hp);
            let alpha_tr = boundary_root(d, &p, self.delta);
            let (alpha_blk, blocker) = self.ratio_test(ws, d, &p);
            if kappa <= 0.0 {
                if self.opts.regularize {
                    return CgExit::NegativeCurvature;
                }
                return self.advance(d, &p, alpha_tr, alpha_blk, blocker);
            }
            let alpha = rr / kappa;
            if alpha >= alpha_tr.min(alpha_blk) {
                return self.advance(d, &p, alpha_tr, alpha_blk, blocker);
            }
            d.axpy(alpha, &p, 1.0);
            r += proj.project(&hp) * alpha;
            let rr_new = r.norm_squared();
            if rr_new.sqrt() <= tol {
                return CgExit::Converged;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            p = proj.project(&(-&r + p * beta));
        }
        CgExit::Converged
    }

    fn advance(
        &self,
        d: &mut DVector<f64>,
        p: &DVector<f64>,
        alpha_tr: f64,
        alpha_blk: f64,
        blocker: Option<Blocker>,
    ) -> CgExit {
        if alpha_blk < alpha_tr {
            d.axpy(alpha_blk, p, 1.0);
            let b = blocker.expect("finite blocking step has a blocker");
            if let Blocker::Bound(i, side) = b {
                d[i] = match side {
                    Side::Lower => self.cons.lower[i],
                    Side::Upper => self.cons.upper[i],
                };
            }
            CgExit::Blocked(b)
        } else {
            if alpha_tr.is_finite() {
                d.axpy(alpha_tr, p, 1.0);
            }
            CgExit::Boundary
        }
    }
}

/// Approximately minimizes the quadratic model subject to the linearized
/// constraints and `‖d‖ ≤ delta`, starting from `start` (which must satisfy
/// the constraints), or from zero.
pub fn qp_subproblem(
    g: &DVector<f64>,
    hess: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    cons: &LinearConstraints,
    delta: f64,
    start: Option<&DVector<f64>>,
    opts: SubproblemOptions,
) -> SubproblemResult {
    let n = g.len();
    let m = cons.rows();
    let mut d = start.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut ws = WorkingSet {
        fixed: vec![None; n],
        rows: vec![false; m],
    };
    for i in 0..n {
        if d[i] <= cons.lower[i] {
            d[i] = cons.lower[i];
            ws.fixed[i] = Some(Side::Lower);
        } else if d[i] >= cons.upper[i] {
            d[i] = cons.upper[i];
            ws.fixed[i] = Some(Side::Upper);
        }
    }
    for j in 0..m {
        let row = cons.jac.row(j);
        let slack = cons.rhs[j] - row.dot(&d.transpose());
        if slack <= 1e-14 * (1.0 + cons.rhs[j].abs()) && row.norm() > 0.0 {
            ws.rows[j] = true;
        }
    }

    let mut ctx = Ctx {
        g,
        hess,
        cons,
        delta,
        opts,
        shift: 0.0,
        cg_iterations: 0,
    };
    let mut hit_boundary = false;
    let mut negative_curvature = false;
    let mut row_mult = DVector::zeros(m);
    let mut bound_mult = DVector::zeros(n);
    let scale = 1.0 + g.amax();
    for _ in 0..10 * (n + m) + 50 {
        let (proj, idx) = ws.projector(&cons.jac);
        let exit = ctx.steihaug(&ws, &proj, &mut d);
        match exit {
            CgExit::Blocked(Blocker::Bound(i, side)) => ws.fixed[i] = Some(side),
            CgExit::Blocked(Blocker::Row(j)) => ws.rows[j] = true,
            CgExit::Boundary => {
                hit_boundary = true;
                break;
            }
            CgExit::NegativeCurvature => {
                negative_curvature = true;
                ctx.shift = (2.0 * ctx.shift).max(1e-8);
            }
            CgExit::Converged => {
                let gm = g + ctx.h(&d);
                let lam = proj.row_multipliers(&gm);
                let mut nu = gm.clone();
                for (k, &j) in idx.iter().enumerate() {
                    nu.axpy(lam[k], &cons.jac.row(j).transpose(), 1.0);
                }
                // The most wrongly signed multiplier leaves the working set.
                let mut worst: Option<(f64, Blocker)> = None;
                let mut consider = |viol: f64, b: Blocker| {
                    if viol > 1e-12 * scale && worst.is_none_or(|(w, _)| viol > w) {
                        worst = Some((viol, b));
                    }
                };
                for (k, &j) in idx.iter().enumerate() {
                    consider(-lam[k], Blocker::Row(j));
                }
                for i in 0..n {
                    match ws.fixed[i] {
                        Some(Side::Lower) => consider(-nu[i], Blocker::Bound(i, Side::Lower)),
                        Some(Side::Upper) => consider(nu[i], Blocker::Bound(i, Side::Upper)),
                        None => {}
                    }
                }
                row_mult.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    row_mult[j] = lam[k];
                }
                bound_mult = DVector::from_iterator(
                    n,
                    (0..n).map(|i| if ws.fixed[i].is_some() { -nu[i] } else { 0.0 }),
                );
                match worst {
                    Some((_, Blocker::Row(j))) => ws.rows[j] = false,
                    Some((_, Blocker::Bound(i, _))) => ws.fixed[i] = None,
                    None => break,
                }
            }
        }
    }
    if hit_boundary {
        // Multipliers for the final working set, used only as estimates.
        let (proj, idx) = ws.projector(&cons.jac);
        let gm = g + ctx.h(&d);
        let lam = proj.row_multipliers(&gm);
        row_mult.fill(0.0);
        for (k, &j) in idx.iter().enumerate() {
            row_mult[j] = lam[k];
        }
    }
    let hd = hess(&d);
    let predicted_reduction = -(g.dot(&d) + 0.5 * d.dot(&hd));
    SubproblemResult {
        step: d,
        predicted_reduction,
        row_multipliers: row_mult,
        bound_multipliers: bound_mult,
        hit_boundary,
        negative_curvature,
        shift: ctx.shift,
        cg_iterations: ctx.cg_iterations,
    }
}

/// Least-norm step toward satisfying the violated rows `c_j > 0` of
/// `c + J·v ≤ 0` inside the box; variables pushed outside the box are fixed
/// at their bound and the rest re-solved. Not scaled to the trust region.
pub fn normal_step(c: &DVector<f64>, jac: &DMatrix<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    let n = jac.ncols();
    let violated: Vec<usize> = (0..c.len()).filter(|&j| c[j] > 0.0).collect();
    let mut v = DVector::zeros(n);
    if violated.is_empty() {
        return v;
    }
    let mut fixed = vec![false; n];
    for _ in 0..=n {
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        if free.is_empty() {
            break;
        }
        let mut target = DVector::from_iterator(violated.len(), violated.iter().map(|&j| -c[j]));
        for (k, &j) in violated.iter().enumerate() {
            for i in 0..n {
                if fixed[i] {
                    target[k] -= jac[(j, i)] * v[i];
                }
            }
        }
        let sub = DMatrix::from_fn(violated.len(), free.len(), |k, i| jac[(violated[k], free[i])]);
        let sol = lstsq(&sub, &target);
        let mut clipped = false;
        for (k, &i) in free.iter().enumerate() {
            v[i] = sol[k];
            if v[i] < lower[i] {
                v[i] = lower[i];
                fixed[i] = true;
                clipped = true;
            } else if v[i] > upper[i] {
                v[i] = upper[i];
                fixed[i] = true;
                clipped = true;
            }
        }
        if !clipped {
            break;
        }
    }
    v
}
