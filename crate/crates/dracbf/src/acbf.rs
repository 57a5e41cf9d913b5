//! Per-obstacle linear half-spaces on the commanded acceleration.
//!
//! The squared-distance barrier h = ‖P‖² − R² with horizon-matched gains
//! k₁ = 2/H, k₂ = 2/H² collapses, after worst-case padding of the obstacle
//! acceleration into an effective clearance, to one affine constraint per
//! obstacle: n·a ≤ (2/H²)(d − R_eff − v_cl·H). Risk tightening subtracts a
//! λ·σ term from the clearance before the same reduction.

use crate::projection::{gauss_southwell_project, ProjectionConfig};
use crate::relkin::RelativeKinematics;
use crate::Vec3;
use serde::{Deserialize, Serialize};

/// Actuation limits and latency entering the effective clearance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClearanceParams {
    /// Combined UAV + obstacle radius (m).
    pub r_sum: f64,
    /// Speed limit (m/s).
    pub v_max: f64,
    /// Acceleration limit (m/s²).
    pub a_max: f64,
    /// Jerk limit (m/s³).
    pub j_max: f64,
    /// Total perception-to-actuation latency (s).
    pub latency: f64,
}

/// One linear safe-acceleration constraint: normal·a ≤ bound.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    /// Unit constraint normal (the LoS direction for obstacle constraints).
    pub normal: Vec3,
    /// Right-hand side (m/s²).
    pub bound: f64,
    /// Obstacle that produced the constraint; used for deterministic
    /// tie-breaking in the projector.
    pub obstacle_id: usize,
}

/// Grid over which the per-cycle lookahead horizon is selected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorizonConfig {
    /// Shortest admissible horizon (s).
    pub h_min: f64,
    /// Longest admissible horizon (s).
    pub h_max: f64,
    /// Number of uniform grid candidates, at least 2.
    pub n_candidates: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            h_min: 0.15,
            h_max: 0.4,
            n_candidates: 6,
        }
    }
}

/// Effective clearance: the radius sum enlarged by latency, actuation-limit,
/// jerk, and obstacle-acceleration padding,
/// R_sum + v_max·Δ + ½·a_max·Δ² + ⅙·j_max·H³ + ½·â·H².
pub fn effective_clearance(cp: &ClearanceParams, horizon: f64, acc_bound: f64) -> f64 {
    cp.r_sum
        + cp.v_max * cp.latency
        + 0.5 * cp.a_max * cp.latency * cp.latency
        + cp.j_max * horizon.powi(3) / 6.0
        + 0.5 * acc_bound * horizon * horizon
}

/// Untightened half-space for one obstacle: n·a ≤ (2/H²)(d − R_eff − v_cl·H).
///
/// Emitted even when d ≤ R_eff (bound strongly negative): the projector then
/// produces the strongest feasible escape instead of the caller failing.
pub fn halfspace(
    rk: &RelativeKinematics,
    r_eff: f64,
    horizon: f64,
    obstacle_id: usize,
) -> HalfSpace {
    HalfSpace {
        normal: rk.los_unit,
        bound: 2.0 / (horizon * horizon) * (rk.range - r_eff - rk.closing_speed * horizon),
        obstacle_id,
    }
}

/// Risk-tightened half-space: n·a ≤ (2/H²)(d − R_eff − v_cl·H − λ·σ_dH).
pub fn tightened_halfspace(
    rk: &RelativeKinematics,
    r_eff: f64,
    horizon: f64,
    lambda: f64,
    sigma_dh: f64,
    obstacle_id: usize,
) -> HalfSpace {
    HalfSpace {
        normal: rk.los_unit,
        bound: 2.0 / (horizon * horizon)
            * (rk.range - r_eff - rk.closing_speed * horizon - lambda * sigma_dh),
        obstacle_id,
    }
}

/// Second-order barrier residual ḧ + k₁ḣ + k₂h with h = ‖P‖² − R², k₁ = 2/H,
/// k₂ = 2/H². Positive means the second-order condition holds. Diagnostic;
/// the runtime filter works with the reduced half-space instead.
pub fn barrier_residual(
    rk: &RelativeKinematics,
    uav_acc: &Vec3,
    obs_acc: &Vec3,
    r_sum: f64,
    horizon: f64,
) -> f64 {
    let h = rk.rel_pos.norm_squared() - r_sum * r_sum;
    let h_dot = 2.0 * rk.rel_pos.dot(&rk.rel_vel);
    let h_ddot =
        2.0 * rk.rel_vel.norm_squared() + 2.0 * rk.rel_pos.dot(&(obs_acc - uav_acc));
    let k1 = 2.0 / horizon;
    let k2 = 2.0 / (horizon * horizon);
    h_ddot + k1 * h_dot + k2 * h
}

/// Feasibility tolerance used by the horizon search: scale-aware in the
/// constraint units, 1e-6 · (2/H²) · 1 m.
pub fn horizon_feasibility_tol(horizon: f64) -> f64 {
    1e-6 * 2.0 / (horizon * horizon)
}

/// Select the largest horizon on a uniform grid over [h_min, h_max] whose
/// constraint set admits an acceleration within the box.
///
/// `build` constructs the (tightened) constraint set for a candidate horizon.
/// Feasibility is certified by running the fixed-budget projector from the
/// nominal command and checking the residual violation against
/// [`horizon_feasibility_tol`]. Falls back to `h_min` when no candidate
/// passes.
pub fn select_horizon(
    cfg: &HorizonConfig,
    mut build: impl FnMut(f64) -> Vec<HalfSpace>,
    nominal: Vec3,
    proj: &ProjectionConfig,
) -> f64 {
    let n = cfg.n_candidates.max(2);
    for k in (0..n).rev() {
        let h = cfg.h_min + (cfg.h_max - cfg.h_min) * k as f64 / (n - 1) as f64;
        let constraints = build(h);
        let p = gauss_southwell_project(nominal, &constraints, proj);
        if p.max_violation <= horizon_feasibility_tol(h) {
            return h;
        }
    }
    cfg.h_min
}
