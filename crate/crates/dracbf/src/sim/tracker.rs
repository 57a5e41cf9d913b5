//! Constant-velocity Kalman tracker.
//!
//! Stands in for a full perception stack: consumes noisy position fixes and
//! emits the per-obstacle estimate tuple the filter consumes — position and
//! velocity means, position covariance, and the LoS-projected relative
//! velocity standard deviation.

use crate::relkin::{ObstacleEstimate, UavState};
use crate::{Mat3, Vec3};
use nalgebra::{Matrix6, Vector6};

#[derive(Debug, Clone)]
pub struct TrackerState {
    /// Mean [position; velocity].
    pub mean: Vector6<f64>,
    /// 6×6 covariance, kept symmetric PSD.
    pub cov: Matrix6<f64>,
    /// White-noise acceleration intensity q (m²/s³).
    pub process_noise: f64,
    /// Measurement noise variance (m²).
    pub meas_var: f64,
}

/// Floor on the measurement variance so noise-free scenarios stay well posed.
const MEAS_VAR_FLOOR: f64 = 1e-8;

/// Initial velocity variance before any velocity information exists.
const INIT_VEL_VAR: f64 = 100.0;

impl TrackerState {
    /// Initialize from the first position fix.
    pub fn initialize(z: Vec3, process_noise: f64, meas_std: f64) -> Self {
        let meas_var = (meas_std * meas_std).max(MEAS_VAR_FLOOR);
        let mut mean = Vector6::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&z);
        let mut cov = Matrix6::zeros();
        for k in 0..3 {
            cov[(k, k)] = meas_var;
            cov[(k + 3, k + 3)] = INIT_VEL_VAR;
        }
        Self {
            mean,
            cov,
            process_noise,
            meas_var,
        }
    }

    pub fn position(&self) -> Vec3 {
        self.mean.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vec3 {
        self.mean.fixed_rows::<3>(3).into()
    }

    pub fn position_cov(&self) -> Mat3 {
        self.cov.fixed_view::<3, 3>(0, 0).into()
    }

    pub fn velocity_cov(&self) -> Mat3 {
        self.cov.fixed_view::<3, 3>(3, 3).into()
    }

    /// Time update: constant-velocity transition with white-noise acceleration.
    pub fn predict(&mut self, dt: f64) {
        let mut f = Matrix6::identity();
        for k in 0..3 {
            f[(k, k + 3)] = dt;
        }
        let q = self.process_noise;
        let mut qm = Matrix6::zeros();
        let q_pp = q * dt.powi(3) / 3.0;
        let q_pv = q * dt * dt / 2.0;
        let q_vv = q * dt;
        for k in 0..3 {
            qm[(k, k)] = q_pp;
            qm[(k, k + 3)] = q_pv;
            qm[(k + 3, k)] = q_pv;
            qm[(k + 3, k + 3)] = q_vv;
        }
        self.mean = f * self.mean;
        self.cov = f * self.cov * f.transpose() + qm;
        self.symmetrize();
    }

    /// Measurement update with a position fix (Joseph form).
    pub fn update(&mut self, z: Vec3) {
        let p_pp = self.position_cov();
        let s = p_pp + Mat3::identity() * self.meas_var;
        let s_inv = s.try_inverse().expect("innovation covariance invertible");
        // K = P Hᵀ S⁻¹ with H = [I 0]: the first three columns of P times S⁻¹
        let p_cols = self.cov.fixed_view::<6, 3>(0, 0).into_owned();
        let k_gain = p_cols * s_inv;
        let innovation = z - self.position();
        self.mean += k_gain * innovation;
        // Joseph form: (I − K H) P (I − K H)ᵀ + K R Kᵀ
        let mut kh = Matrix6::zeros();
        kh.fixed_view_mut::<6, 3>(0, 0).copy_from(&k_gain);
        let i_kh = Matrix6::identity() - kh;
        self.cov =
            i_kh * self.cov * i_kh.transpose() + k_gain * (self.meas_var) * k_gain.transpose();
        self.symmetrize();
    }

    fn symmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }

    /// Estimate tuple for the safety filter. The LoS velocity std projects the
    /// velocity covariance onto the UAV→obstacle direction; `acc_bound` comes
    /// from the caller's differentiator envelope.
    pub fn estimate(&self, uav: &UavState, acc_bound: f64) -> ObstacleEstimate {
        let rel = self.position() - uav.position;
        let range = rel.norm();
        let vel_cov = self.velocity_cov();
        let sigma_v_los = if range > crate::relkin::D_MIN {
            let n = rel / range;
            (vel_cov * n).dot(&n).max(0.0).sqrt()
        } else {
            (vel_cov.trace() / 3.0).max(0.0).sqrt()
        };
        ObstacleEstimate {
            position: self.position(),
            velocity: self.velocity(),
            position_cov: self.position_cov(),
            sigma_v_los,
            acc_bound,
        }
    }
}

/// One predict/update cycle; skips the update when no measurement arrived.
pub fn tracker_step(state: &mut TrackerState, z: Option<Vec3>, dt: f64) {
    state.predict(dt);
    if let Some(z) = z {
        state.update(z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_converges_on_clean_constant_velocity_target() {
        let dt = 0.01;
        let truth_v = Vec3::new(-8.0, 1.0, 0.0);
        let mut pos = Vec3::new(100.0, 5.0, 0.0);
        let mut ts = TrackerState::initialize(pos, 1.0, 0.0);
        for _ in 0..200 {
            pos += truth_v * dt;
            tracker_step(&mut ts, Some(pos), dt);
        }
        let err = (ts.velocity() - truth_v).norm();
        assert!(err < 0.01 * truth_v.norm(), "velocity error {err}");
    }

    #[test]
    fn predict_only_inflates_covariance() {
        let mut ts = TrackerState::initialize(Vec3::zeros(), 1.0, 0.1);
        let before = ts.cov.trace();
        ts.predict(0.01);
        assert!(ts.cov.trace() > before);
    }

    #[test]
    fn stationary_target_covariance_settles_monotonically() {
        let dt = 0.01;
        let mut ts = TrackerState::initialize(Vec3::new(3.0, 0.0, 0.0), 1.0, 0.1);
        let mut prev = ts.position_cov().trace();
        let mut increased_after_transient = false;
        for k in 0..500 {
            tracker_step(&mut ts, Some(Vec3::new(3.0, 0.0, 0.0)), dt);
            let tr = ts.position_cov().trace();
            if k > 5 && tr > prev + 1e-12 {
                increased_after_transient = true;
            }
            prev = tr;
        }
        assert!(
            !increased_after_transient,
            "position covariance rose after the transient"
        );
    }

    #[test]
    fn covariance_stays_psd_under_updates() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let dt = 0.01;
        let mut ts = TrackerState::initialize(Vec3::zeros(), 2.0, 0.3);
        for k in 0..1000 {
            let z = if k % 7 == 0 {
                None
            } else {
                Some(Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ))
            };
            tracker_step(&mut ts, z, dt);
            assert!(
                ts.cov.cholesky().is_some(),
                "covariance lost PSD at step {k}"
            );
        }
    }

    #[test]
    fn sigma_v_los_projects_velocity_covariance() {
        let uav = UavState::new(Vec3::zeros(), Vec3::zeros());
        let mut ts = TrackerState::initialize(Vec3::new(10.0, 0.0, 0.0), 1.0, 0.1);
        // shape the velocity block anisotropically
        ts.cov[(3, 3)] = 4.0;
        ts.cov[(4, 4)] = 1.0;
        ts.cov[(5, 5)] = 1.0;
        let est = ts.estimate(&uav, 1.5);
        // LoS is +x, so σ_v is the x std
        assert!((est.sigma_v_los - 2.0).abs() < 1e-9);
        assert_eq!(est.acc_bound, 1.5);
    }
}
