use nalgebra::{DMatrix, DVector};

use super::*;
use crate::problem::{gen_scalar_instance, sample_scenarios, InstanceManifest, ScalarSpec};

fn toy() -> (ProblemInstance, ScenarioSet) {
    let inst = InstanceManifest::toy4().build().unwrap();
    let scen = sample_scenarios(inst.elasticity(), 100, 11).unwrap();
    (inst, scen)
}

#[test]
fn toy_converges_quickly() {
    let (inst, scen) = toy();
    let cfg = SolverConfig {
        tol_kkt: 1e-12,
        ..Default::default()
    };
    let st = solve(&inst, &scen, &cfg, None).unwrap();
    assert_eq!(st.status, Status::Converged);
    assert!(st.iter <= 10, "{} iterations", st.iter);
    assert!(st.kkt.feasibility <= 1e-12);
}

#[test]
fn paths_agree_and_runs_repeat() {
    let (inst, scen) = toy();
    let sparse = solve(&inst, &scen, &SolverConfig::default(), None).unwrap();
    let again = solve(&inst, &scen, &SolverConfig::default(), None).unwrap();
    assert_eq!(sparse.p, again.p);
    assert_eq!(sparse.iter, again.iter);
    let dense_cfg = SolverConfig {
        path: EvalPath::Dense,
        ..Default::default()
    };
    let dense = solve(&inst, &scen, &dense_cfg, None).unwrap();
    assert!((&sparse.p - &dense.p).amax() <= 1e-8);
}

#[test]
fn iterates_stay_in_bounds() {
    let (inst, scen) = toy();
    let st = solve(&inst, &scen, &SolverConfig::default(), Some(&DVector::zeros(16))).unwrap();
    assert!(st.p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    for w in st.trace.windows(2) {
        if w[0].accepted {
            assert!(w[1].merit <= w[0].merit + 1e-12 * (1.0 + w[0].merit.abs()) || w[1].penalty > w[0].penalty);
        }
    }
}

#[test]
fn rejects_start_outside_the_box() {
    let (inst, scen) = toy();
    let p0 = DVector::from_element(16, 2.0);
    assert!(solve(&inst, &scen, &SolverConfig::default(), Some(&p0)).is_err());
    let cfg = SolverConfig {
        shrink: 1.5,
        ..Default::default()
    };
    assert!(solve(&inst, &scen, &cfg, None).is_err());
}

#[test]
fn unconstrained_quadratic_matches_closed_form() {
    let base = InstanceManifest::toy4().build().unwrap();
    let r = base.route_count();
    let inf = DVector::from_element(r, f64::INFINITY);
    // A strong regularizer keeps p* small next to the shift, so every flow
    // stays inside (0, x_u) along the way.
    let inst = base
        .with_lambda(50.0)
        .unwrap()
        .with_commodity(crate::network::CommoditySpec::empty(r))
        .unwrap()
        .with_price_bounds(-&inf, inf.clone())
        .unwrap()
        .with_flow_upper(DVector::from_element(r, 1e6))
        .unwrap();
    let scen = ScenarioSet::from_columns(DMatrix::from_fn(r, 5, |i, j| 50.0 + (i + j) as f64 * 0.1), 3).unwrap();
    let b = inst.elasticity().b();
    let q = inst.cost().q_dense();
    let zbar = scen.xi().column_mean();
    let h = DMatrix::identity(r, r) * inst.lambda() + b.transpose() * &q * b;
    let rhs = -(b.transpose() * (&q * &zbar - inst.cost().linear()));
    let want = h.lu().solve(&rhs).unwrap();
    let cfg = SolverConfig {
        delta0: 1e3,
        ..Default::default()
    };
    let st = solve(&inst, &scen, &cfg, Some(&DVector::zeros(r))).unwrap();
    assert_eq!(st.status, Status::Converged);
    assert!(st.iter <= 3);
    assert!((&st.p - &want).amax() <= 1e-8);
}

#[test]
fn unreachable_demand_is_infeasible() {
    let spec = ScalarSpec {
        lambda: 1.0,
        elasticity: -1.0,
        quad: 0.2,
        linear: 0.0,
        x_upper: 2.0,
        noise_mean: 1.0,
        noise_std: 0.1,
        price_bounds: (-1.0, 1.0),
        demand: Some(3.0),
    };
    let inst = gen_scalar_instance(&spec).unwrap();
    let scen = sample_scenarios(inst.elasticity(), 50, 5).unwrap();
    let st = solve(&inst, &scen, &SolverConfig::default(), None).unwrap();
    assert_eq!(st.status, Status::Infeasible);
    assert!(st.kkt.feasibility > 0.9);
}

#[test]
fn nonconvex_scalar_reaches_the_kink() {
    let inst = gen_scalar_instance(&ScalarSpec::nonconvex(1.0)).unwrap();
    let scen = ScenarioSet::from_columns(DMatrix::zeros(1, 1), 0).unwrap();
    let st = solve(&inst, &scen, &SolverConfig::default(), Some(&DVector::from_element(1, -0.9))).unwrap();
    let p = st.p[0];
    assert!((p + 0.5).abs() < 1e-6, "stopped at {p} ({})", st.status);
    let f = |v: f64| merit(&inst, &scen, &DVector::from_element(1, v), 0.0).unwrap();
    let h = 1e-7;
    assert!((f(p + h) - f(p)) / h >= -1e-6);
    assert!((f(p - h) - f(p)) / h >= -1e-6);
}

#[test]
fn regularized_mode_also_converges() {
    let (inst, scen) = toy();
    let cfg = SolverConfig {
        hessian_mode: HessianMode::Regularized,
        ..Default::default()
    };
    assert!(solve(&inst, &scen, &cfg, None).unwrap().converged());
}

#[test]
fn state_round_trips_through_json() {
    let (inst, scen) = toy();
    let st = solve(&inst, &scen, &SolverConfig::default(), None).unwrap();
    let back: SolverState = serde_json::from_str(&serde_json::to_string(&st).unwrap()).unwrap();
    assert_eq!(back, st);
}
