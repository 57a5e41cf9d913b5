//! Acceleration-space safety filtering for UAV dynamic obstacle avoidance.
//!
//! The filter converts a nominal acceleration command into a probabilistically
//! safe one. Each tracked obstacle contributes one linear half-space on the
//! commanded acceleration, built from line-of-sight geometry over a short
//! lookahead horizon. The half-space bound is padded by an effective clearance
//! (latency, actuation limits, jerk, and a learned obstacle-acceleration
//! envelope) and tightened by a distribution-free Cantelli factor derived from
//! a per-obstacle risk budget. A Monte Carlo CVaR layer watches predicted
//! violation margins and triggers an early evasive maneuver with one-cycle
//! tightening before any constraint is breached. The safe command is obtained
//! by a fixed-budget Gauss-Southwell projection onto the constraint
//! intersection, so the per-cycle cost is constant and solver-free.
//!
//! The crate also ships a deterministic double-integrator simulation world
//! (straight-line obstacles, Gaussian position measurements, constant-velocity
//! Kalman tracking, mission state machine) and a batch harness that reproduces
//! the avoidance metrics, sensitivity sweeps, and trigger ablation of the
//! evaluation protocol. An exact active-set QP doubles as the classical
//! CLF-CBF-QP baseline and as the oracle the projection is verified against.
//!
//! See the `examples/` directory for one runnable entry point per capability,
//! and the `dracbf` binary for the batch CLI.

pub mod acbf;
pub mod drcvar;
pub mod harness;
pub mod pipeline;
pub mod projection;
pub mod qp;
pub mod relkin;
pub mod risk;
pub mod sim;
pub mod smd;

/// 3-component real vector; units are context-dependent (m, m/s, m/s²).
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 real matrix, used for position/velocity covariances (m², m²/s²).
pub type Mat3 = nalgebra::Matrix3<f64>;

pub use acbf::{
    barrier_residual, effective_clearance, halfspace, select_horizon, tightened_halfspace,
    ClearanceParams, HalfSpace, HorizonConfig,
};
pub use drcvar::{
    dr_cvar, dynamic_distance, evaluate_trigger, propagate_samples, single_time_gaussian_trigger,
    violation_terms, CvarConfig, TriggerDecision,
};
pub use pipeline::{FilterChoice, FilterConfig, SafetyFilter, StepOutput};
pub use projection::{gauss_southwell_project, max_violation, Projection, ProjectionConfig};
pub use qp::{clf_cbf_qp_step, solve_projection_qp, ClfTerms, QpError, QpProblem, QpSolution};
pub use relkin::{
    los_sigma, relative_kinematics, KinematicsError, ObstacleEstimate, RelativeKinematics,
    UavState,
};
pub use risk::{allocate_risk, cantelli_lambda, RiskAllocation, RiskError};
pub use smd::{smd_step, update_acc_bound, SmdGains, SmdState};
