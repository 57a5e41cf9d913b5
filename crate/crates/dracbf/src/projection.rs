//! Constant-time Gauss-Southwell projection of the nominal acceleration onto
//! the intersection of the half-space constraints and the actuation box.
//!
//! Each iteration corrects the single most violated constraint and then clamps
//! to the box. The iteration budget is fixed: the loop never exits early, so
//! the per-cycle cost is independent of how many constraints are active.

use crate::acbf::HalfSpace;
use crate::Vec3;
use serde::{Deserialize, Serialize};

/// Violation level at which the diagnostic counter considers the iterate
/// feasible (m/s²). Diagnostic only; the loop still runs its full budget.
pub const DIAG_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Relaxation coefficient in (0, 1].
    pub omega: f64,
    /// Fixed iteration budget.
    pub base_iters: usize,
    /// Box half-width: the output satisfies ‖a‖_∞ ≤ a_max (m/s²).
    pub a_max: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            base_iters: 12,
            a_max: 6.0,
        }
    }
}

/// Result of a fixed-budget projection run.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Final iterate; always inside the box.
    pub acc: Vec3,
    /// max_i (A_i·a − b_i)₊ at the final iterate; 0 means all half-spaces hold.
    pub max_violation: f64,
    /// First iteration (1-based) at which the violation dropped to
    /// [`DIAG_TOL`], if it did. Iteration 0 means the input already satisfied
    /// everything.
    pub first_feasible_iter: Option<usize>,
}

/// Signed violation of the most violated constraint and its index, or `None`
/// for an empty constraint set.
pub fn most_violated(a: &Vec3, constraints: &[HalfSpace]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, hs) in constraints.iter().enumerate() {
        let v = hs.normal.dot(a) - hs.bound;
        let replace = match best {
            None => true,
            Some((bi, bv)) => {
                // ties go to the lowest obstacle id
                v > bv || (v == bv && hs.obstacle_id < constraints[bi].obstacle_id)
            }
        };
        if replace {
            best = Some((idx, v));
        }
    }
    best
}

/// max over i of (A_i·a − b_i); −∞ for an empty set.
pub fn max_violation(a: &Vec3, constraints: &[HalfSpace]) -> f64 {
    most_violated(a, constraints).map_or(f64::NEG_INFINITY, |(_, v)| v)
}

fn clamp_box(a: &mut Vec3, a_max: f64) {
    for k in 0..3 {
        a[k] = a[k].clamp(-a_max, a_max);
    }
}

/// Project `nominal` onto {a : A_i·a ≤ b_i ∀i, ‖a‖_∞ ≤ a_max} with a fixed
/// budget of relaxed Gauss-Southwell steps.
///
/// Runs exactly `cfg.base_iters` iterations regardless of the data; the caller
/// inspects `max_violation` to judge whether the intersection was reached.
pub fn gauss_southwell_project(
    nominal: Vec3,
    constraints: &[HalfSpace],
    cfg: &ProjectionConfig,
) -> Projection {
    let mut a = nominal;
    clamp_box(&mut a, cfg.a_max);

    let mut first_feasible_iter = None;
    if max_violation(&a, constraints) <= DIAG_TOL {
        first_feasible_iter = Some(0);
    }

    for iter in 1..=cfg.base_iters {
        if let Some((idx, violation)) = most_violated(&a, constraints) {
            let hs = &constraints[idx];
            // ‖A‖² is 1 for unit normals; kept in case of future non-unit rows.
            let step = cfg.omega * violation.max(0.0) / hs.normal.norm_squared();
            a -= hs.normal * step;
        }
        clamp_box(&mut a, cfg.a_max);
        if first_feasible_iter.is_none() && max_violation(&a, constraints) <= DIAG_TOL {
            first_feasible_iter = Some(iter);
        }
    }

    Projection {
        acc: a,
        max_violation: max_violation(&a, constraints).max(0.0),
        first_feasible_iter,
    }
}
