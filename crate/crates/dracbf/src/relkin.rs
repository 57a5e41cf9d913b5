//! Relative kinematics and line-of-sight geometry between the UAV and each
//! obstacle, plus propagation of tracking uncertainty along the line of sight.

use crate::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Range floor (m) below which the UAV and an obstacle are treated as
/// coincident; guards the division in `n = P/‖P‖`.
pub const D_MIN: f64 = 1e-3;

/// Tolerance for the PSD check on the combined LoS covariance quadratic form.
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    /// UAV and obstacle centers are within the range floor; the caller must
    /// treat this as a collision.
    #[error("degenerate range {range:.3e} m (floor {floor:.1e} m)")]
    DegenerateRange { range: f64, floor: f64 },
    /// The combined covariance projected on the LoS came out negative beyond
    /// tolerance; the tracker covariance is corrupted.
    #[error("combined covariance not PSD along LoS: quadratic form {value:.3e}")]
    NonPsdCovariance { value: f64 },
}

/// UAV translational state with self-localization uncertainty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UavState {
    /// Position (m).
    pub position: Vec3,
    /// Velocity (m/s).
    pub velocity: Vec3,
    /// Position covariance (m²), symmetric PSD. Zero for perfect localization.
    pub position_cov: Mat3,
}

impl UavState {
    pub fn new(position: Vec3, velocity: Vec3) -> Self {
        Self {
            position,
            velocity,
            position_cov: Mat3::zeros(),
        }
    }
}

/// Tracker output for one obstacle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstacleEstimate {
    /// Estimated position (m).
    pub position: Vec3,
    /// Estimated velocity (m/s).
    pub velocity: Vec3,
    /// Position covariance (m²), symmetric PSD.
    pub position_cov: Mat3,
    /// Standard deviation of the LoS component of the relative velocity (m/s).
    pub sigma_v_los: f64,
    /// Learned upper bound on the obstacle acceleration (m/s²); monotone
    /// non-decreasing over an episode.
    pub acc_bound: f64,
}

/// Line-of-sight quantities derived from relative position and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeKinematics {
    /// Relative position P = p_obs − p_uav (m).
    pub rel_pos: Vec3,
    /// Relative velocity V = v_obs − v_uav (m/s).
    pub rel_vel: Vec3,
    /// LoS unit vector n = P/‖P‖.
    pub los_unit: Vec3,
    /// Range d = ‖P‖ (m), strictly positive.
    pub range: f64,
    /// Closing speed max(0, −nᵀV) (m/s); only approaching components count.
    pub closing_speed: f64,
}

/// LoS geometry between the UAV and one obstacle estimate.
///
/// Fails with [`KinematicsError::DegenerateRange`] when the centers are closer
/// than [`D_MIN`].
pub fn relative_kinematics(
    uav: &UavState,
    obs: &ObstacleEstimate,
) -> Result<RelativeKinematics, KinematicsError> {
    let rel_pos = obs.position - uav.position;
    let range = rel_pos.norm();
    if range <= D_MIN {
        return Err(KinematicsError::DegenerateRange {
            range,
            floor: D_MIN,
        });
    }
    let los_unit = rel_pos / range;
    let rel_vel = obs.velocity - uav.velocity;
    let closing_speed = (-los_unit.dot(&rel_vel)).max(0.0);
    Ok(RelativeKinematics {
        rel_pos,
        rel_vel,
        los_unit,
        range,
        closing_speed,
    })
}

/// LoS distance prediction uncertainty over a lookahead of `horizon` seconds:
/// √(nᵀ(Σ_e+Σ_i)n + (H·σ_v)²).
///
/// Tiny negative quadratic forms (within [`PSD_TOL`]) are clamped to zero;
/// anything below that reports a corrupted covariance.
pub fn los_sigma(
    uav_cov: &Mat3,
    obs_cov: &Mat3,
    los_unit: &Vec3,
    horizon: f64,
    sigma_v_los: f64,
) -> Result<f64, KinematicsError> {
    let combined = uav_cov + obs_cov;
    let quad = (combined * los_unit).dot(los_unit);
    if quad < -PSD_TOL {
        return Err(KinematicsError::NonPsdCovariance { value: quad });
    }
    let quad = quad.max(0.0);
    Ok((quad + (horizon * sigma_v_los).powi(2)).sqrt())
}
