use nalgebra::DVector;

use super::SolverConfig;
use crate::error::Result;
use crate::evaluator::Evaluator;
use crate::problem::{ProblemInstance, ScenarioSet};

/// `‖max(c, 0)‖₁`.
pub fn violation_l1(c: &DVector<f64>) -> f64 {
    c.iter().map(|&v| v.max(0.0)).sum()
}

/// `Σ max(p_l − p, 0) + max(p − p_u, 0)`.
pub fn bound_violation_l1(inst: &ProblemInstance, p: &DVector<f64>) -> f64 {
    p.iter()
        .zip(inst.p_lower().iter().zip(inst.p_upper().iter()))
        .map(|(&v, (&lo, &hi))| (lo - v).max(0.0) + (v - hi).max(0.0))
        .sum()
}

/// ℓ1 exact penalty `f_N(p) + penalty·(‖c_N(p)⁺‖₁ + bound violation)`.
pub fn merit(inst: &ProblemInstance, scen: &ScenarioSet, p: &DVector<f64>, penalty: f64) -> Result<f64> {
    let ev = Evaluator::new(inst, scen)?;
    let flows = ev.flows(p)?;
    let c = ev.constraint(&flows);
    Ok(merit_value(ev.objective(&flows), violation_l1(&c) + bound_violation_l1(inst, p), penalty))
}

pub fn merit_value(objective: f64, violation: f64, penalty: f64) -> f64 {
    if penalty == 0.0 {
        objective
    } else {
        objective + penalty * violation
    }
}

/// Smallest admissible penalty: never decreases, and stays above
/// `‖γ‖_∞ + margin`.
pub fn update_penalty(current: f64, gamma: &DVector<f64>, margin: f64) -> f64 {
    current.max(gamma.amax() + margin)
}

/// Trust radius after a step with ratio `rho`.
pub fn tr_update(rho: f64, delta: f64, step_norm: f64, cfg: &SolverConfig) -> f64 {
    if rho.is_nan() || rho < 0.25 {
        delta * cfg.shrink
    } else if rho > 0.75 && step_norm >= 0.99 * delta {
        (delta * cfg.expand).min(cfg.delta_max)
    } else {
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_branches() {
        let cfg = SolverConfig::default();
        assert_eq!(tr_update(0.9, 1.0, 1.0, &cfg), 2.0);
        assert_eq!(tr_update(0.1, 1.0, 1.0, &cfg), 0.25);
        assert_eq!(tr_update(0.5, 1.0, 0.3, &cfg), 1.0);
        assert_eq!(tr_update(0.9, 1.0, 0.3, &cfg), 1.0);
        assert_eq!(tr_update(0.9, 800.0, 800.0, &cfg), 1000.0);
        assert_eq!(tr_update(f64::NAN, 1.0, 1.0, &cfg), 0.25);
    }

    #[test]
    fn merit_definition() {
        assert_eq!(merit_value(1.5, 0.0, 10.0), 1.5);
        assert_eq!(merit_value(1.5, 3.0, 0.0), 1.5);
        assert_eq!(merit_value(1.5, 0.25, 4.0), 2.5);
        assert_eq!(violation_l1(&DVector::from_row_slice(&[-1.0, 0.5, 2.0])), 2.5);
    }

    #[test]
    fn penalty_is_monotone() {
        let g = DVector::from_row_slice(&[0.5, -3.0]);
        assert_eq!(update_penalty(1.0, &g, 0.1), 3.1);
        assert_eq!(update_penalty(10.0, &g, 0.1), 10.0);
    }
}
