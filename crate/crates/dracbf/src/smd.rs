//! Sliding-mode differentiation of measured obstacle velocity.
//!
//! A per-axis robust differentiator estimates the obstacle acceleration from
//! the tracker's velocity output without amplifying noise the way a finite
//! difference would. Its magnitude feeds a conservative, monotone envelope
//! â_max that pads the effective clearance: once an obstacle has maneuvered
//! aggressively, the margin never shrinks back.

use crate::Vec3;
use serde::{Deserialize, Serialize};

/// Differentiator gains. All strictly positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmdGains {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// Global scaling the gains were derived from; kept for reporting.
    pub gamma: f64,
}

impl SmdGains {
    /// Map a reported tuple (γ, L₀, L₁, L₂) onto the differentiator gains with
    /// the usual Lipschitz-style scaling: l₁ = √γ·L₀, l₂ = γ·L₁, l₃ = γ·L₂.
    ///
    /// The correspondence is a configuration choice; construct the gains
    /// directly when the signal class calls for different values (the sgn-fed
    /// state slews at most l₂ per second, so l₂ must dominate the curvature
    /// of the velocity signal being differentiated).
    pub fn from_reported(gamma: f64, l0: f64, l1: f64, l2: f64) -> Self {
        Self {
            l1: gamma.sqrt() * l0,
            l2: gamma * l1,
            l3: gamma * l2,
            gamma,
        }
    }
}

impl Default for SmdGains {
    fn default() -> Self {
        Self::from_reported(1.5, 4.0, 3.0, 2.0)
    }
}

/// Per-obstacle differentiator state: z0 tracks the measured velocity, z1 the
/// acceleration, z2 the jerk. One scalar differentiator per axis.
#[derive(Debug, Clone, Default)]
pub struct SmdState {
    pub z0: Vec3,
    pub z1: Vec3,
    pub z2: Vec3,
    pub initialized: bool,
}

/// sgn with sgn(0) = 0, so a converged differentiator is an exact fixed point.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One explicit-Euler step of the differentiator on a velocity sample.
///
/// First call seeds z0 with the measurement and leaves z1 = z2 = 0.
pub fn smd_step(state: &SmdState, v_meas: Vec3, dt: f64, gains: &SmdGains) -> SmdState {
    debug_assert!(dt > 0.0);
    if !state.initialized {
        return SmdState {
            z0: v_meas,
            z1: Vec3::zeros(),
            z2: Vec3::zeros(),
            initialized: true,
        };
    }
    let mut next = state.clone();
    for axis in 0..3 {
        let e = state.z0[axis] - v_meas[axis];
        let z0_dot = -gains.l1 * e.abs().sqrt() * sgn(e) + state.z1[axis];
        let z1_dot = -gains.l2 * sgn(e);
        let z2_dot = -gains.l3 * sgn(state.z2[axis] - z1_dot);
        next.z0[axis] = state.z0[axis] + dt * z0_dot;
        next.z1[axis] = state.z1[axis] + dt * z1_dot;
        next.z2[axis] = state.z2[axis] + dt * z2_dot;
    }
    next
}

/// Monotone envelope update: max(current bound, ‖z1‖).
pub fn update_acc_bound(current_bound: f64, state: &SmdState) -> f64 {
    current_bound.max(state.z1.norm())
}
