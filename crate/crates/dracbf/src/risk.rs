//! Risk budget allocation across obstacles and Cantelli tightening factors.
//!
//! A global per-step risk budget α_total ∈ (0,1) is split by proximity-velocity
//! weighting: faster-closing and nearer obstacles receive a larger share. Each
//! share αᵢ maps to the distribution-free one-sided tightening factor
//! λᵢ = √((1−αᵢ)/αᵢ), which bounds the LoS prediction error with probability
//! at least 1−αᵢ for any finite-variance error distribution.

use crate::relkin::RelativeKinematics;
use thiserror::Error;

/// Default ε in the closing-speed normalization; negligible against m/s-scale
/// speeds.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Range floor in the proximity weight, mirroring the LoS range guard.
const W_RANGE_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    /// No obstacles to allocate over; the caller must skip tightening.
    #[error("risk allocation over an empty obstacle set")]
    EmptyObstacleSet,
    /// α outside (0,1) has no Cantelli factor.
    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),
}

/// Per-obstacle budgets and their tightening factors.
#[derive(Debug, Clone)]
pub struct RiskAllocation {
    /// Per-obstacle risk budgets, αᵢ ∈ (0,1), summing to α_total.
    pub alphas: Vec<f64>,
    /// λᵢ = √((1−αᵢ)/αᵢ).
    pub lambdas: Vec<f64>,
}

impl RiskAllocation {
    /// Allocate and convert in one pass.
    pub fn compute(
        kinematics: &[RelativeKinematics],
        alpha_total: f64,
        eps: f64,
    ) -> Result<Self, RiskError> {
        let alphas = allocate_risk(kinematics, alpha_total, eps)?;
        let lambdas = alphas
            .iter()
            .map(|&a| cantelli_lambda(a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { alphas, lambdas })
    }
}

/// Split `alpha_total` across obstacles by proximity-velocity weighting:
/// rᵢ = v_cl,i / (maxⱼ v_cl,j + ε), wᵢ = (1+rᵢ)/max(dᵢ, 10⁻³),
/// αᵢ = wᵢ/Σⱼwⱼ · α_total.
pub fn allocate_risk(
    kinematics: &[RelativeKinematics],
    alpha_total: f64,
    eps: f64,
) -> Result<Vec<f64>, RiskError> {
    if kinematics.is_empty() {
        return Err(RiskError::EmptyObstacleSet);
    }
    debug_assert!(alpha_total > 0.0 && alpha_total < 1.0);
    debug_assert!(eps > 0.0);

    let v_max = kinematics
        .iter()
        .map(|k| k.closing_speed)
        .fold(0.0f64, f64::max);
    let weights: Vec<f64> = kinematics
        .iter()
        .map(|k| {
            let r = k.closing_speed / (v_max + eps);
            (1.0 + r) / k.range.max(W_RANGE_FLOOR)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total * alpha_total).collect())
}

/// One-sided Cantelli tightening factor λ = √((1−α)/α).
pub fn cantelli_lambda(alpha: f64) -> Result<f64, RiskError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RiskError::InvalidAlpha(alpha));
    }
    Ok(((1.0 - alpha) / alpha).sqrt())
}
