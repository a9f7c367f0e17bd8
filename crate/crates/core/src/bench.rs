//! Dense versus sparse kernel timings on generated instances.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evaluator::EvalPath;
use crate::problem::generators::seed_offset;
use crate::problem::{sample_scenarios, CostSpec, DemandSpec, GeneratorSpec, InstanceManifest, ModelParams};
use crate::solver::{solve, SolverConfig, Status};

pub const CSV_HEADER: &str = "routes,path,median_ms,std_ms,speedup,kernel_median_ms,kernel_std_ms,kernel_speedup,\
objective_median,max_objective_gap,converged,repeats";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub routes: Vec<usize>,
    pub repeats: usize,
    pub samples: usize,
    pub seed: u64,
    /// Routes per edge.
    pub route_edge_ratio: usize,
    pub commodities: usize,
    /// Defaults to the interior regime: runs converge, so the final
    /// objectives of the two paths are comparable.
    pub params: ModelParams,
    pub demand: DemandSpec,
    pub solver: SolverConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            routes: (50..=225).step_by(25).collect(),
            repeats: 10,
            samples: 100,
            seed: 0,
            route_edge_ratio: 5,
            commodities: 2,
            params: ModelParams::interior(),
            demand: DemandSpec::RouteFraction(0.6),
            solver: SolverConfig::default(),
        }
    }
}

/// One timed solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub routes: usize,
    pub repeat: usize,
    pub path: EvalPath,
    pub total_ms: f64,
    pub kernel_ms: f64,
    pub objective: f64,
    pub iterations: usize,
    pub status: Status,
}

/// Aggregate over the repeats of one (size, path) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub routes: usize,
    pub path: EvalPath,
    pub median_ms: f64,
    pub std_ms: f64,
    /// Dense median over sparse median; 1 on the dense row.
    pub speedup: f64,
    pub kernel_median_ms: f64,
    pub kernel_std_ms: f64,
    pub kernel_speedup: f64,
    pub objective_median: f64,
    /// Largest |dense − sparse| final objective over repeats of this size.
    pub max_objective_gap: f64,
    pub converged: usize,
    pub repeats: usize,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Seed of repeat `k`; the instance and its scenarios derive from it.
pub fn repeat_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add(k as u64)
}

/// Solves every (size, repeat) instance on both paths. Generation and
/// sampling are outside the timed region.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRun>> {
    let mut runs = Vec::new();
    for &routes in &cfg.routes {
        let edges = (routes / cfg.route_edge_ratio.max(1)).max(1);
        for k in 0..cfg.repeats {
            let seed = repeat_seed(cfg.seed, k);
            let inst = InstanceManifest::new(GeneratorSpec::Random {
                routes,
                edges: Some(edges),
                commodities: cfg.commodities,
                seed,
                params: cfg.params.clone(),
                cost: CostSpec::default(),
                demand: cfg.demand.clone(),
            })
            .build()?;
            let scen = sample_scenarios(inst.elasticity(), cfg.samples, seed.wrapping_add(seed_offset::SCENARIOS))?;
            for path in [EvalPath::Dense, EvalPath::Sparse] {
                let solver = SolverConfig {
                    path,
                    ..cfg.solver.clone()
                };
                let st = solve(&inst, &scen, &solver, None)?;
                log::info!(
                    "routes {routes} repeat {k} {path}: {} in {} iterations, {:.1} ms",
                    st.status,
                    st.iter,
                    st.wall_time * 1e3
                );
                runs.push(BenchRun {
                    routes,
                    repeat: k,
                    path,
                    total_ms: st.wall_time * 1e3,
                    kernel_ms: st.kernel_time * 1e3,
                    objective: st.objective,
                    iterations: st.iter,
                    status: st.status,
                });
            }
        }
    }
    Ok(runs)
}

pub fn summarize(runs: &[BenchRun]) -> Vec<BenchRow> {
    let mut sizes: Vec<usize> = runs.iter().map(|r| r.routes).collect();
    sizes.dedup();
    let mut rows = Vec::new();
    for routes in sizes {
        let of = |path: EvalPath| -> Vec<&BenchRun> { runs.iter().filter(|r| r.routes == routes && r.path == path).collect() };
        let (dense, sparse) = (of(EvalPath::Dense), of(EvalPath::Sparse));
        let gap = dense
            .iter()
            .filter_map(|d| sparse.iter().find(|s| s.repeat == d.repeat).map(|s| (d.objective - s.objective).abs()))
            .fold(0.0f64, f64::max);
        let totals = |v: &[&BenchRun]| v.iter().map(|r| r.total_ms).collect::<Vec<_>>();
        let kernels = |v: &[&BenchRun]| v.iter().map(|r| r.kernel_ms).collect::<Vec<_>>();
        let dense_total = median(&totals(&dense));
        let dense_kernel = median(&kernels(&dense));
        for (path, cell) in [(EvalPath::Dense, &dense), (EvalPath::Sparse, &sparse)] {
            let t = totals(cell);
            let kt = kernels(cell);
            rows.push(BenchRow {
                routes,
                path,
                median_ms: median(&t),
                std_ms: std_dev(&t),
                speedup: dense_total / median(&t),
                kernel_median_ms: median(&kt),
                kernel_std_ms: std_dev(&kt),
                kernel_speedup: dense_kernel / median(&kt),
                objective_median: median(&cell.iter().map(|r| r.objective).collect::<Vec<_>>()),
                max_objective_gap: gap,
                converged: cell.iter().filter(|r| r.status == Status::Converged).count(),
                repeats: cell.len(),
            });
        }
    }
    rows
}

pub fn write_csv<W: Write>(rows: &[BenchRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.12e},{:.3e},{},{}",
            r.routes,
            r.path,
            r.median_ms,
            r.std_ms,
            r.speedup,
            r.kernel_median_ms,
            r.kernel_std_ms,
            r.kernel_speedup,
            r.objective_median,
            r.max_objective_gap,
            r.converged,
            r.repeats
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_spread() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(std_dev(&[5.0]), 0.0);
        assert!((std_dev(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_repeat_rows() {
        let cfg = BenchConfig {
            routes: vec![50],
            repeats: 1,
            samples: 20,
            ..Default::default()
        };
        let rows = summarize(&run_benchmark(&cfg).unwrap());
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.std_ms == 0.0 && r.repeats == 1));
        assert_eq!(rows[0].speedup, 1.0);
        assert!(rows[0].max_objective_gap <= 1e-8);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
