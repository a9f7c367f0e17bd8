use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use onp_core::evaluator::{eval_flows, EvalPath, Evaluator};
use onp_core::oracle::{dense_reference, relative_error};
use onp_core::problem::{
    gen_random_instance, sample_scenarios, CostSpec, DemandSpec, InstanceManifest, ModelParams, ProblemInstance,
    ScenarioSet,
};
use onp_core::solver::{solve, SolverConfig};
use onp_core::sparse::CsrMatrix;

fn instance(routes: usize, seed: u64) -> ProblemInstance {
    gen_random_instance(
        routes,
        Some(routes / 3 + 4),
        2,
        seed,
        &ModelParams::default(),
        &CostSpec::default(),
        &DemandSpec::RouteFraction(0.1),
    )
    .expect("random instance")
}

fn price(inst: &ProblemInstance, unit: &[f64]) -> DVector<f64> {
    let (lo, hi) = (inst.p_lower(), inst.p_upper());
    DVector::from_fn(inst.route_count(), |i, _| lo[i] + unit[i % unit.len()] * (hi[i] - lo[i]))
}

fn unit_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 1..80)
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    relative_error(a.as_slice(), b.as_slice()).0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flows_are_projected_and_masked(routes in 10usize..40, seed in 0u64..500, n in 1usize..60, unit in unit_vec()) {
        let inst = instance(routes, seed);
        let scen = sample_scenarios(inst.elasticity(), n, seed).unwrap();
        let flows = eval_flows(&inst, &scen, &price(&inst, &unit)).unwrap();
        let xu = inst.x_upper();
        for i in 0..n {
            for j in 0..routes {
                let (y, x, w) = (flows.y()[(j, i)], flows.x()[(j, i)], flows.omega()[(j, i)]);
                prop_assert_eq!(x, y.clamp(0.0, xu[j]));
                prop_assert_eq!(w == 1.0, y > 0.0 && y < xu[j]);
                prop_assert_eq!(flows.support_sets()[i].contains(&j), x > 0.0);
            }
        }
        prop_assert_eq!(flows.active_counts().sum(), flows.omega().sum());
    }

    #[test]
    fn flows_are_lipschitz_in_price(routes in 10usize..40, seed in 0u64..500, a in unit_vec(), b in unit_vec()) {
        let inst = instance(routes, seed);
        let scen = sample_scenarios(inst.elasticity(), 8, seed).unwrap();
        let (p1, p2) = (price(&inst, &a), price(&inst, &b));
        let x1 = eval_flows(&inst, &scen, &p1).unwrap();
        let x2 = eval_flows(&inst, &scen, &p2).unwrap();
        let sigma = inst.elasticity().b().singular_values().max();
        for i in 0..8 {
            let dx = (x1.x().column(i) - x2.x().column(i)).norm();
            prop_assert!(dx <= sigma * (&p1 - &p2).norm() + 1e-12);
        }
    }

    #[test]
    fn sparse_path_matches_dense_reference(routes in 10usize..48, seed in 0u64..500, n in 1usize..120, unit in unit_vec()) {
        let inst = instance(routes, seed);
        let scen = sample_scenarios(inst.elasticity(), n, seed + 1).unwrap();
        let ev = Evaluator::new(&inst, &scen).unwrap();
        let p = price(&inst, &unit);
        let flows = ev.flows(&p).unwrap();
        let want = dense_reference(&inst, &scen, &p).unwrap();
        let hess = want.hessian_matrix().unwrap();
        prop_assert!((ev.objective(&flows) - want.objective).abs() <= 1e-10 * (1.0 + want.objective.abs()));
        for path in [EvalPath::Sparse, EvalPath::Dense] {
            prop_assert!(relative_error(ev.grad_f(&flows, path).as_slice(), &want.gradient).0 <= 1e-10);
            prop_assert!(max_rel(&ev.hess_f(&flows, path), &hess) <= 1e-10);
        }
        prop_assert!(max_rel(&ev.grad_c(&flows), &want.jacobian_matrix()) <= 1e-10);
        prop_assert!(max_rel(&ev.grad_c_dense(&flows), &want.jacobian_matrix()) <= 1e-10);
    }

    #[test]
    fn hessian_is_symmetric_and_regularized(routes in 10usize..40, seed in 0u64..500, unit in unit_vec()) {
        let inst = instance(routes, seed);
        let scen = sample_scenarios(inst.elasticity(), 30, seed).unwrap();
        let ev = Evaluator::new(&inst, &scen).unwrap();
        let flows = ev.flows(&price(&inst, &unit)).unwrap();
        let h = ev.hess_f(&flows, EvalPath::Sparse);
        prop_assert_eq!(&h, &h.transpose());
        let lam = h.clone().symmetric_eigenvalues().min();
        prop_assert!(lam >= inst.lambda() * (1.0 - 1e-10));
        let v = DVector::from_fn(routes, |i, _| unit[i % unit.len()] - 0.5);
        for path in [EvalPath::Sparse, EvalPath::Dense] {
            let op = ev.hessian_operator(&flows, path).apply(&v);
            prop_assert!((op - &h * &v).amax() <= 1e-10 * (1.0 + h.amax() * v.amax()));
        }
    }

    #[test]
    fn cost_operator_matches_dense_q(routes in 10usize..48, seed in 0u64..500) {
        let inst = instance(routes, seed);
        let cost = inst.cost();
        let a = cost.scaled_assignment().to_dense();
        let q = cost.q_dense();
        prop_assert!((&q - 2.0 * &a * a.transpose()).amax() <= 1e-12);
        prop_assert!((cost.q_sparse().to_dense() - &q).amax() <= 1e-12);
        let x = DMatrix::from_fn(routes, 2, |i, j| (i * 7 + j * 3) as f64 % 5.0 - 2.0);
        prop_assert!((cost.apply_q(&x).unwrap() - &q * &x).amax() <= 1e-12 * (1.0 + q.amax()));
    }

    #[test]
    fn csr_products_match_dense(
        rows in 1usize..20,
        cols in 1usize..20,
        entries in prop::collection::vec((0usize..20, 0usize..20, -3.0..3.0f64), 0..60),
    ) {
        let trip: Vec<(usize, usize, f64)> = entries.into_iter().map(|(r, c, v)| (r % rows, c % cols, v)).collect();
        let m = CsrMatrix::from_triplets(rows, cols, &trip).unwrap();
        let d = m.to_dense();
        prop_assert_eq!(m.transpose().transpose().to_dense(), d.clone());
        let x: Vec<f64> = (0..cols).map(|i| i as f64 - 1.5).collect();
        let want = &d * DVector::from_column_slice(&x);
        let got = m.mul_vec(&x);
        for (g, w) in got.iter().zip(want.iter()) {
            prop_assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn scenario_columns_do_not_depend_on_count(routes in 10usize..30, seed in 0u64..500, n in 2usize..40) {
        let inst = instance(routes, seed);
        let big = sample_scenarios(inst.elasticity(), n, seed).unwrap();
        let small = sample_scenarios(inst.elasticity(), n / 2, seed).unwrap();
        prop_assert_eq!(big.xi().columns(0, n / 2).into_owned(), small.xi().clone());
    }

    #[test]
    fn solver_iterates_stay_in_the_box(routes in 10usize..30, seed in 0u64..200, unit in unit_vec()) {
        let inst = instance(routes, seed);
        let scen = sample_scenarios(inst.elasticity(), 20, seed).unwrap();
        let cfg = SolverConfig { max_iter: 15, ..Default::default() };
        let st = solve(&inst, &scen, &cfg, Some(&price(&inst, &unit))).unwrap();
        let (lo, hi) = (inst.p_lower(), inst.p_upper());
        prop_assert!((0..routes).all(|i| st.p[i] >= lo[i] && st.p[i] <= hi[i]));
        prop_assert!(st.trace.iter().all(|t| t.merit.is_finite()));
    }
}

#[test]
fn bundled_toy_manifest_matches_the_builtin() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy4_manifest.json");
    let bundled = InstanceManifest::load(path).unwrap();
    assert_eq!(bundled, InstanceManifest::toy4());
    assert_eq!(bundled.digest().unwrap(), InstanceManifest::toy4().digest().unwrap());
}

#[test]
fn evaluation_is_thread_count_independent() {
    let inst = instance(40, 3);
    let scen = sample_scenarios(inst.elasticity(), 300, 3).unwrap();
    let p = inst.midpoint();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let rescen = ScenarioSet::from_columns(scen.xi().clone(), 0).unwrap();
            let ev = Evaluator::new(&inst, &rescen).unwrap();
            let r = ev.evaluate(&p, EvalPath::Sparse, true).unwrap();
            (r.objective, r.gradient, r.hessian)
        })
    };
    assert_eq!(run(1), run(4));
}
