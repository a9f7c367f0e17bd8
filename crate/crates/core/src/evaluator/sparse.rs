use rayon::prelude::*;

use super::{block_reduce, FlowEvaluation};
use crate::problem::ProblemInstance;
use crate::sparse::CsrMatrix;

/// Dense edge-indexed buffer that remembers which entries are nonzero so it
/// can be cleared in time proportional to their number.
pub(super) struct EdgeScratch {
    values: Vec<f64>,
    marked: Vec<bool>,
    touched: Vec<usize>,
}

impl EdgeScratch {
    pub(super) fn new(edges: usize) -> Self {
        Self {
            values: vec![0.0; edges],
            marked: vec![false; edges],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, e: usize, v: f64) {
        if !self.marked[e] {
            self.marked[e] = true;
            self.touched.push(e);
        }
        self.values[e] += v;
    }

    fn clear(&mut self) {
        for &e in &self.touched {
            self.values[e] = 0.0;
            self.marked[e] = false;
        }
        self.touched.clear();
    }

    /// `u = Ã(rows, :)ᵀ·v(rows)` for a column `v`.
    fn gather(&mut self, a: &CsrMatrix, rows: &[usize], v: impl Fn(usize) -> f64) {
        for &j in rows {
            let vj = v(j);
            let (cols, vals) = a.row(j);
            for (&e, &av) in cols.iter().zip(vals) {
                self.add(e, av * vj);
            }
        }
    }

    fn row_dot(&self, a: &CsrMatrix, j: usize) -> f64 {
        let (cols, vals) = a.row(j);
        cols.iter().zip(vals).map(|(&e, &av)| av * self.values[e]).sum()
    }
}

/// `½⟨Q·xᵢ, xᵢ⟩ − ⟨s, xᵢ⟩` for sample `i`, touching only routes with flow.
pub(super) fn sample_cost(
    inst: &ProblemInstance,
    flows: &FlowEvaluation,
    i: usize,
    scratch: &mut EdgeScratch,
) -> f64 {
    let a = inst.cost().scaled_assignment();
    let s = inst.cost().linear();
    let x = flows.x();
    let support = &flows.support_sets()[i];
    scratch.gather(a, support, |j| x[(j, i)]);
    let quad: f64 = scratch.touched.iter().map(|&e| scratch.values[e].powi(2)).sum();
    scratch.clear();
    let lin: f64 = support.iter().map(|&j| s[j] * x[(j, i)]).sum();
    quad - lin
}

/// `Σᵢ Diag(ωᵢ)·(Q·xᵢ − s)` from the active sets. `Q·xᵢ` needs every route
/// carrying flow, so the gather runs over the support of `xᵢ` (active and
/// saturated routes); only the active rows are evaluated and scattered.
pub(super) fn masked_residual_sum(inst: &ProblemInstance, flows: &FlowEvaluation) -> Vec<f64> {
    let a = inst.cost().scaled_assignment();
    let s = inst.cost().linear();
    let x = flows.x();
    block_reduce(flows.sample_count(), inst.route_count(), |range, acc| {
        let mut u = EdgeScratch::new(inst.edge_count());
        for i in range {
            u.gather(a, &flows.support_sets()[i], |j| x[(j, i)]);
            for &j in &flows.active_sets()[i] {
                acc[j] += 2.0 * u.row_dot(a, j) - s[j];
            }
            u.clear();
        }
    })
}

/// `Σᵢ Diag(ωᵢ)·Q·Diag(ωᵢ)` on the pattern of `Q`. Entry `(j, k)` is
/// `Q[j, k]` times the number of samples in which both routes are active;
/// the counts come from bit-packed rows of `Ω`.
pub(super) fn hessian_inner(q: &CsrMatrix, flows: &FlowEvaluation) -> CsrMatrix {
    let words = flows.sample_count().div_ceil(64);
    let mut bits = vec![0u64; q.nrows() * words];
    for (i, active) in flows.active_sets().iter().enumerate() {
        let (w, bit) = (i / 64, 1u64 << (i % 64));
        for &j in active {
            bits[j * words + w] |= bit;
        }
    }
    let row_bits = |j: usize| &bits[j * words..(j + 1) * words];
    let values: Vec<f64> = (0..q.nrows())
        .into_par_iter()
        .flat_map_iter(|j| {
            let (cols, vals) = q.row(j);
            let bj = row_bits(j);
            cols.iter().zip(vals).map(move |(&k, &v)| {
                let both: u32 = bj.iter().zip(row_bits(k)).map(|(a, b)| (a & b).count_ones()).sum();
                v * f64::from(both)
            })
        })
        .collect();
    q.with_values(values).expect("pattern size matches")
}
