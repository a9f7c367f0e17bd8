use nalgebra::{DMatrix, DVector};

use super::*;
use crate::problem::{gen_scalar_instance, InstanceManifest, ScalarSpec};

fn scalar(lambda: f64) -> (ProblemInstance, ScenarioSet) {
    let inst = gen_scalar_instance(&ScalarSpec::nonconvex(lambda)).unwrap();
    let scen = ScenarioSet::from_columns(DMatrix::zeros(1, 1), 0).unwrap();
    (inst, scen)
}

fn at(ev: &Evaluator, p: f64) -> FlowEvaluation {
    ev.flows(&DVector::from_element(1, p)).unwrap()
}

#[test]
fn scalar_projection_branches() {
    let (inst, scen) = scalar(1.0);
    let ev = Evaluator::new(&inst, &scen).unwrap();
    for (p, y, x, w) in [(1.0, -1.0, 0.0, 0.0), (0.25, -0.25, 0.0, 0.0), (-0.25, 0.25, 0.25, 1.0)] {
        let f = at(&ev, p);
        assert_eq!(f.y()[(0, 0)], y);
        assert_eq!(f.x()[(0, 0)], x);
        assert_eq!(f.omega()[(0, 0)], w);
    }
    // Saturated: y = 0.75 > x_u.
    let f = at(&ev, -0.75);
    assert_eq!(f.x()[(0, 0)], 0.5);
    assert_eq!(f.omega()[(0, 0)], 0.0);
    assert_eq!(f.support_sets()[0], vec![0]);
    assert!(f.active_sets()[0].is_empty());
}

#[test]
fn scalar_fixture_is_not_midpoint_convex_at_zero() {
    let (inst, scen) = scalar(1.0);
    let ev = Evaluator::new(&inst, &scen).unwrap();
    let f = |p: f64| ev.objective(&at(&ev, p));
    assert!(f(0.0) > 0.5 * f(-0.25) + 0.5 * f(0.25));
    // The kink at −0.5 bends upward, so the chord there lies above.
    assert!(f(-0.5) < 0.5 * f(-0.75) + 0.5 * f(-0.25));
}

#[test]
fn boundary_points_are_inactive_and_counted() {
    let (inst, scen) = scalar(1.0);
    let ev = Evaluator::new(&inst, &scen).unwrap();
    for p in [0.0, -0.5] {
        let f = at(&ev, p);
        assert_eq!(f.omega()[(0, 0)], 0.0);
        assert_eq!(f.boundary_count(), 1);
        assert_eq!(f.boundary_distance(), 0.0);
    }
}

#[test]
fn scalar_objective_values() {
    for (lambda, p, want) in [(0.0, -0.25, -0.25), (1.0, 1.0, 0.5), (5.0, -1.0, 2.0)] {
        let (inst, scen) = scalar(lambda);
        let ev = Evaluator::new(&inst, &scen).unwrap();
        let f = at(&ev, p);
        assert!((ev.objective(&f) - want).abs() < 1e-15, "lambda {lambda} p {p}");
    }
}

#[test]
fn scalar_gradient_inside_the_active_interval() {
    // f(p) = p²/2 + p on (−0.5, 0), so f'(−0.25) = 0.75.
    let (inst, scen) = scalar(1.0);
    let ev = Evaluator::new(&inst, &scen).unwrap();
    let f = at(&ev, -0.25);
    for path in [EvalPath::Dense, EvalPath::Sparse] {
        assert!((ev.grad_f(&f, path)[0] - 0.75).abs() < 1e-15);
    }
}

#[test]
fn clipped_samples_leave_only_the_regularizer() {
    let (inst, scen) = scalar(2.0);
    let ev = Evaluator::new(&inst, &scen).unwrap();
    let f = at(&ev, 0.75);
    for path in [EvalPath::Dense, EvalPath::Sparse] {
        assert_eq!(ev.grad_f(&f, path)[0], 1.5);
        assert_eq!(ev.hess_f(&f, path)[(0, 0)], 2.0);
    }
    assert_eq!(ev.grad_c(&f).nrows(), 0);
}

#[test]
fn identity_elasticity_collapses_the_gradient() {
    // N = 1, B = I, Q = 0, all active: ∇f = λp − s.
    let spec = ScalarSpec {
        lambda: 0.5,
        elasticity: 1.0,
        quad: 0.0,
        linear: -0.3,
        x_upper: 10.0,
        noise_mean: 1.0,
        noise_std: 0.0,
        price_bounds: (-1.0, 1.0),
        demand: Some(0.2),
    };
    let inst = gen_scalar_instance(&spec).unwrap();
    let scen = ScenarioSet::from_columns(DMatrix::from_element(1, 1, 1.0), 0).unwrap();
    let ev = Evaluator::new(&inst, &scen).unwrap();
    let f = at(&ev, 0.4);
    for path in [EvalPath::Dense, EvalPath::Sparse] {
        assert!((ev.grad_f(&f, path)[0] - (0.5 * 0.4 + 0.3)).abs() < 1e-15);
    }
    // K = 1, d = N: ∇c = −B.
    assert_eq!(ev.grad_c(&f)[(0, 0)], -1.0);
    assert_eq!(ev.grad_c_dense(&f)[(0, 0)], -1.0);
    // c = l − x̄ = 0.2 − 1.4.
    assert!((ev.constraint(&f)[0] - (0.2 - 1.4)).abs() < 1e-15);
}

#[test]
fn all_active_hessian_is_regularized_btqb() {
    let inst = InstanceManifest::toy4().build().unwrap();
    let r = inst.route_count();
    // No noise and a large shift keep every flow inside (0, x_u).
    let shifted = DMatrix::from_element(r, 3, 1.0);
    let scen = ScenarioSet::from_columns(shifted, 0).unwrap();
    let ev = Evaluator::new(&inst, &scen).unwrap();
    let f = ev.flows(&DVector::from_element(r, 0.1)).unwrap();
    assert_eq!(f.active_counts().sum(), (3 * r) as f64);
    let b = inst.elasticity().b();
    let want = DMatrix::identity(r, r) * inst.lambda() + b.transpose() * inst.cost().q_dense() * b;
    for path in [EvalPath::Dense, EvalPath::Sparse] {
        let h = ev.hess_f(&f, path);
        assert!((h - &want).abs().max() < 1e-12);
    }
    let op = ev.hessian_operator(&f, EvalPath::Sparse).to_dense();
    assert!((op - &want).abs().max() < 1e-12);
}

#[test]
fn all_inactive_hessian_is_lambda_identity() {
    let inst = InstanceManifest::toy4().build().unwrap();
    let r = inst.route_count();
    let scen = ScenarioSet::from_columns(DMatrix::from_element(r, 2, -5.0), 0).unwrap();
    let ev = Evaluator::new(&inst, &scen).unwrap();
    let f = ev.flows(&DVector::zeros(r)).unwrap();
    for path in [EvalPath::Dense, EvalPath::Sparse] {
        assert_eq!(ev.hess_f(&f, path), DMatrix::identity(r, r) * inst.lambda());
        assert_eq!(ev.grad_f(&f, path), DVector::zeros(r));
    }
    assert_eq!(ev.grad_c(&f), DMatrix::zeros(2, r));
}

#[test]
fn constraint_hessian_is_zero() {
    let (inst, scen) = scalar(1.0);
    let ev = Evaluator::new(&inst, &scen).unwrap();
    assert!(ev.hess_c().is_zero());
    assert_eq!(ev.hess_c().apply(&DVector::from_element(3, 2.0)), DVector::zeros(3));
}

#[test]
fn convexity_threshold_of_identities() {
    let i = DMatrix::identity(4, 4);
    assert!((convexity_threshold_for(&i, &i) - 1.0).abs() < 1e-14);
}

#[test]
fn convexity_threshold_respects_the_cap() {
    let inst = InstanceManifest::toy4().build().unwrap();
    assert!(matches!(convexity_threshold(&inst, 8), Err(crate::Error::Capability(_))));
    assert!(convexity_threshold(&inst, DEFAULT_DENSE_CAP).unwrap() >= -1e-12);
}

#[test]
fn report_serializes() {
    let inst = InstanceManifest::toy4().build().unwrap();
    let scen = crate::problem::sample_scenarios(inst.elasticity(), 10, 1).unwrap();
    let ev = Evaluator::new(&inst, &scen).unwrap();
    let rep = ev.evaluate(&inst.midpoint(), EvalPath::Sparse, true).unwrap();
    let back: EvalReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert_eq!(back, rep);
    assert!(rep.timing.total() >= 0.0);
}

#[test]
fn path_parses() {
    assert_eq!("dense".parse::<EvalPath>().unwrap(), EvalPath::Dense);
    assert!("fast".parse::<EvalPath>().is_err());
}
