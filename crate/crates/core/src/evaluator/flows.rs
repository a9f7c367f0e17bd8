use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_len, Result};
use crate::problem::{ProblemInstance, ScenarioSet};

/// Entries with `|Y − b| ≤ BOUNDARY_REL_TOL · max(1, |b|)` for `b ∈ {0, x_u}`
/// are reported as sitting on a kink. They are still treated as inactive.
pub const BOUNDARY_REL_TOL: f64 = 1e-12;

/// Pre-projection flows, projected flows and the active mask at one price.
#[derive(Debug, Clone)]
pub struct FlowEvaluation {
    p: DVector<f64>,
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    omega: DMatrix<f64>,
    active_sets: Vec<Vec<usize>>,
    support_sets: Vec<Vec<usize>>,
    active_counts: DVector<f64>,
    boundary_count: usize,
    boundary_distance: f64,
}

impl FlowEvaluation {
    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    /// `Y = B·p·1ᵀ + Ξ`.
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// `X = proj_[0, x_u](Y)`.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// 0/1 matrix, 1 exactly where `0 < Y < x_u`.
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Sorted routes with `Ω[j, i] = 1`, per sample.
    pub fn active_sets(&self) -> &[Vec<usize>] {
        &self.active_sets
    }

    /// Sorted routes with `X[j, i] > 0`, per sample. This is the active set
    /// plus the routes saturated at `x_u`.
    pub fn support_sets(&self) -> &[Vec<usize>] {
        &self.support_sets
    }

    /// `d = Ω·1`.
    pub fn active_counts(&self) -> &DVector<f64> {
        &self.active_counts
    }

    pub fn sample_count(&self) -> usize {
        self.y.ncols()
    }

    /// Entries numerically on a kink.
    pub fn boundary_count(&self) -> usize {
        self.boundary_count
    }

    /// Smallest distance of any `Y` entry to `{0, x_u}`.
    pub fn boundary_distance(&self) -> f64 {
        self.boundary_distance
    }
}

struct Column {
    active: Vec<usize>,
    support: Vec<usize>,
    boundary: usize,
    distance: f64,
}

pub fn eval_flows(inst: &ProblemInstance, scen: &ScenarioSet, p: &DVector<f64>) -> Result<FlowEvaluation> {
    let r = inst.route_count();
    check_len("price vector", p.len(), r)?;
    check_len("scenario rows", scen.dim(), r)?;
    let n = scen.count();
    let bp = inst.elasticity().b() * p;
    let xu = inst.x_upper();
    let mut y = scen.xi().clone();
    let mut x = DMatrix::zeros(r, n);
    let mut omega = DMatrix::zeros(r, n);
    let (bp, xu) = (bp.as_slice(), xu.as_slice());
    let columns: Vec<Column> = y
        .as_mut_slice()
        .par_chunks_mut(r)
        .zip(x.as_mut_slice().par_chunks_mut(r))
        .zip(omega.as_mut_slice().par_chunks_mut(r))
        .map(|((yc, xc), oc)| {
            let mut col = Column {
                active: Vec::with_capacity(r),
                support: Vec::with_capacity(r),
                boundary: 0,
                distance: f64::INFINITY,
            };
            for (j, (((yv, xv), ov), (&b, &u))) in yc.iter_mut().zip(xc).zip(oc).zip(bp.iter().zip(xu)).enumerate() {
                let v = *yv + b;
                *yv = v;
                *xv = v.clamp(0.0, u);
                if v > 0.0 && v < u {
                    *ov = 1.0;
                    col.active.push(j);
                }
                if *xv > 0.0 {
                    col.support.push(j);
                }
                let dist = v.abs().min((v - u).abs());
                col.distance = col.distance.min(dist);
                if dist <= BOUNDARY_REL_TOL * u.abs().max(1.0) && (v.abs() <= BOUNDARY_REL_TOL || (v - u).abs() <= BOUNDARY_REL_TOL * u.abs().max(1.0)) {
                    col.boundary += 1;
                }
            }
            col
        })
        .collect();
    let active_counts = omega.column_sum();
    let boundary_count = columns.iter().map(|c| c.boundary).sum();
    if boundary_count > 0 {
        log::debug!("{boundary_count} flow entries lie on a projection kink");
    }
    let boundary_distance = columns.iter().map(|c| c.distance).fold(f64::INFINITY, f64::min);
    let (active_sets, support_sets) = columns.into_iter().map(|c| (c.active, c.support)).unzip();
    Ok(FlowEvaluation {
        p: p.clone(),
        y,
        x,
        omega,
        active_sets,
        support_sets,
        active_counts,
        boundary_count,
        boundary_distance,
    })
}
