//! Monte Carlo early-warning layer.
//!
//! Obstacle state samples are drawn from the tracker estimate, propagated at
//! constant relative velocity over a short prediction window, and scored by a
//! violation margin Z = R_sum + D_dyn − ‖P‖, where the dynamic distance D_dyn
//! accounts for reaction latency and the braking capability of both parties.
//! The empirical CVaR of the worst β-fraction of samples, shifted up by a
//! Wasserstein-radius term ε·L_Z, triggers avoidance the moment it reaches
//! zero at any prediction time: margins are widened and an evasive nominal is
//! substituted for one cycle, before any half-space constraint is violated.
//!
//! The module also provides the minimal fallback trigger used by the ablation
//! arm: a single-time Gaussian chance constraint evaluated only at the mean
//! trajectory's closest approach.

use crate::relkin::{los_sigma, relative_kinematics, ObstacleEstimate, RelativeKinematics, UavState};
use crate::{Mat3, Vec3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CvarError {
    /// Combined deceleration must be positive for the braking-distance term.
    #[error("combined deceleration {0} m/s² must be positive")]
    InvalidDecel(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvarConfig {
    /// Tail fraction β ∈ (0,1): the worst ⌈β·N_s⌉ samples enter the CVaR.
    pub beta: f64,
    /// Reaction latency τ (s) in the dynamic distance.
    pub tau: f64,
    /// Wasserstein radius ε ≥ 0.
    pub epsilon: f64,
    /// Lipschitz constant L_Z > 0 of the violation margin.
    pub l_z: f64,
    /// Monte Carlo samples per obstacle, at least 2.
    pub n_samples: usize,
    /// Prediction window length (s). When absent, the pipeline ties it to the
    /// longest constraint horizon.
    pub pred_horizon: f64,
    /// Prediction grid spacing (s).
    pub pred_dt: f64,
    /// Available UAV deceleration magnitude (m/s²).
    pub uav_decel: f64,
    /// Assumed obstacle deceleration magnitude (m/s²).
    pub obs_decel: f64,
}

impl Default for CvarConfig {
    fn default() -> Self {
        Self {
            beta: 0.05,
            tau: 0.02,
            epsilon: 0.05,
            l_z: 1.0,
            n_samples: 64,
            pred_horizon: 0.4,
            pred_dt: 0.05,
            uav_decel: 6.0,
            obs_decel: 2.0,
        }
    }
}

impl CvarConfig {
    /// Prediction grid {0, pred_dt, …, pred_horizon}.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = (self.pred_horizon / self.pred_dt).round() as usize;
        (0..=n).map(|k| k as f64 * self.pred_dt).collect()
    }
}

/// One propagated sample: relative position at t = 0 and the (constant)
/// relative velocity, from which the whole trajectory follows.
#[derive(Debug, Clone, Copy)]
pub struct PropagatedSample {
    pub rel_pos: Vec3,
    pub rel_vel: Vec3,
}

impl PropagatedSample {
    pub fn rel_pos_at(&self, t: f64) -> Vec3 {
        self.rel_pos + self.rel_vel * t
    }
}

/// Early-warning outcome. Overrides are populated only when fired.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerDecision {
    pub fired: bool,
    /// Worst risk value over obstacles and prediction times (m).
    pub worst_cvar: f64,
    /// Tightened global risk budget for one cycle.
    pub alpha_override: Option<f64>,
    /// Horizon override for one cycle.
    pub h_override: Option<f64>,
    /// Evasive nominal acceleration replacing the goal-tracking command.
    pub evasive_nominal: Option<Vec3>,
}

impl TriggerDecision {
    pub fn hold(worst_cvar: f64) -> Self {
        Self {
            fired: false,
            worst_cvar,
            alpha_override: None,
            h_override: None,
            evasive_nominal: None,
        }
    }
}

/// Symmetric square root of a PSD covariance via eigendecomposition, with
/// negative eigenvalues (numerical noise) clamped to zero. Zero covariance
/// maps to the zero matrix, so degenerate sampling is exact.
fn cov_sqrt(cov: &Mat3) -> Mat3 {
    if cov == &Mat3::zeros() {
        return Mat3::zeros();
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Mat3::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Draw `n_samples` obstacle states from the estimate and express them
/// relative to the UAV, which is assumed to continue at its current velocity.
///
/// Position samples use the tracker's position covariance; velocity samples
/// use the isotropic reconstruction N(v̂, σ_v²·I) from the LoS velocity std.
/// Identical seeds yield bitwise-identical samples.
pub fn propagate_samples(
    est: &ObstacleEstimate,
    uav: &UavState,
    cfg: &CvarConfig,
    rng: &mut impl Rng,
) -> Vec<PropagatedSample> {
    let l = cov_sqrt(&est.position_cov);
    (0..cfg.n_samples)
        .map(|_| {
            let xi = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let eta = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let pos = est.position + l * xi;
            let vel = est.velocity + eta * est.sigma_v_los;
            PropagatedSample {
                rel_pos: pos - uav.position,
                rel_vel: vel - uav.velocity,
            }
        })
        .collect()
}

/// Dynamic distance v·τ + v²/(2(a_e + a_i)) for closing speed v ≥ 0.
pub fn dynamic_distance(closing_speed: f64, cfg: &CvarConfig) -> Result<f64, CvarError> {
    let decel = cfg.uav_decel + cfg.obs_decel;
    if decel <= 0.0 {
        return Err(CvarError::InvalidDecel(decel));
    }
    Ok(closing_speed * cfg.tau + closing_speed * closing_speed / (2.0 * decel))
}

/// Violation margins Z⁽ⁿ⁾(t_k) = R_sum + D_dyn⁽ⁿ⁾(t_k) − ‖P⁽ⁿ⁾(t_k)‖, one
/// inner vector per prediction time.
///
/// Requires `cfg.uav_decel + cfg.obs_decel > 0` (see [`dynamic_distance`]).
pub fn violation_terms(
    samples: &[PropagatedSample],
    r_sum: f64,
    cfg: &CvarConfig,
) -> Vec<Vec<f64>> {
    let decel = cfg.uav_decel + cfg.obs_decel;
    debug_assert!(decel > 0.0);
    cfg.time_grid()
        .iter()
        .map(|&t| {
            samples
                .iter()
                .map(|s| {
                    let p = s.rel_pos_at(t);
                    let range = p.norm();
                    let closing = if range > crate::relkin::D_MIN {
                        (-(p / range).dot(&s.rel_vel)).max(0.0)
                    } else {
                        s.rel_vel.norm()
                    };
                    let d_dyn = closing * cfg.tau + closing * closing / (2.0 * decel);
                    r_sum + d_dyn - range
                })
                .collect()
        })
        .collect()
}

/// Distributionally robust empirical CVaR: mean of the worst m = ⌈β·N⌉
/// samples plus the Wasserstein upshift ε·L_Z.
pub fn dr_cvar(z: &[f64], beta: f64, epsilon: f64, l_z: f64) -> f64 {
    debug_assert!(!z.is_empty());
    let m = ((beta * z.len() as f64).ceil() as usize).clamp(1, z.len());
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted[..m].iter().sum::<f64>() / m as f64 + epsilon * l_z
}

/// Per-obstacle risk summary fed to the trigger decision.
#[derive(Debug, Clone)]
pub struct ObstacleRisk {
    pub obstacle_id: usize,
    /// max over prediction times of the DR-CVaR of the violation margin.
    pub max_cvar: f64,
}

/// Unit vector perpendicular to the LoS, in the plane spanned by the LoS and
/// world-up, signed toward the side the obstacle's lateral velocity points
/// away from (ties break toward +up).
fn evasive_direction(rk: &RelativeKinematics) -> Vec3 {
    let n = rk.los_unit;
    let up = Vec3::new(0.0, 0.0, 1.0);
    let mut lat = up - n * up.dot(&n);
    if lat.norm() < 1e-6 {
        // LoS is vertical: fall back to world-x projected off the LoS
        let ex = Vec3::new(1.0, 0.0, 0.0);
        lat = ex - n * ex.dot(&n);
    }
    let lat = lat.normalize();
    let drift = rk.rel_vel.dot(&lat);
    if drift > 0.0 {
        -lat
    } else {
        lat
    }
}

/// Combine per-obstacle CVaR maxima into a trigger decision.
///
/// Fires when any obstacle's risk reaches zero. One-cycle overrides: the risk
/// budget is halved, the horizon jumps to its maximum, and the nominal is
/// replaced by a full-strength lateral evasive command away from the most
/// threatening obstacle.
pub fn evaluate_trigger(
    risks: &[ObstacleRisk],
    kinematics: &[RelativeKinematics],
    alpha_total: f64,
    h_max: f64,
    a_max: f64,
) -> TriggerDecision {
    let worst = risks
        .iter()
        .max_by(|a, b| a.max_cvar.partial_cmp(&b.max_cvar).unwrap());
    let Some(worst) = worst else {
        return TriggerDecision::hold(f64::NEG_INFINITY);
    };
    if worst.max_cvar < 0.0 {
        return TriggerDecision::hold(worst.max_cvar);
    }
    let rk = &kinematics[risks
        .iter()
        .position(|r| r.obstacle_id == worst.obstacle_id)
        .expect("risk entries mirror kinematics")];
    TriggerDecision {
        fired: true,
        worst_cvar: worst.max_cvar,
        alpha_override: Some(alpha_total / 2.0),
        h_override: Some(h_max),
        evasive_nominal: Some(evasive_direction(rk) * a_max),
    }
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9 — far tighter than anything the trigger needs).
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Minimal fallback trigger (ablation arm): a Gaussian chance constraint
/// evaluated once, at the mean trajectory's time of closest approach within
/// the prediction window. Same parameters, overrides, and evasive geometry as
/// the Monte Carlo trigger, but no sampling, no per-time CVaR, and no
/// Wasserstein upshift.
pub fn single_time_gaussian_trigger(
    estimates: &[(usize, &ObstacleEstimate)],
    uav: &UavState,
    kinematics: &[RelativeKinematics],
    r_sums: &[f64],
    cfg: &CvarConfig,
    alpha_total: f64,
    h_max: f64,
    a_max: f64,
) -> TriggerDecision {
    let z_quantile = normal_quantile(1.0 - cfg.beta);
    let mut risks = Vec::with_capacity(estimates.len());
    for (slot, (obstacle_id, est)) in estimates.iter().enumerate() {
        let Ok(rk) = relative_kinematics(uav, est) else {
            continue;
        };
        let vv = rk.rel_vel.norm_squared();
        let t_ca = if vv > 1e-12 {
            (-rk.rel_pos.dot(&rk.rel_vel) / vv).clamp(0.0, cfg.pred_horizon)
        } else {
            0.0
        };
        let p_ca = rk.rel_pos + rk.rel_vel * t_ca;
        let d_ca = p_ca.norm();
        let n_ca = if d_ca > crate::relkin::D_MIN {
            p_ca / d_ca
        } else {
            rk.los_unit
        };
        let closing_ca = (-n_ca.dot(&rk.rel_vel)).max(0.0);
        let d_dyn = dynamic_distance(closing_ca, cfg).unwrap_or(0.0);
        let sigma = los_sigma(
            &uav.position_cov,
            &est.position_cov,
            &n_ca,
            t_ca,
            est.sigma_v_los,
        )
        .unwrap_or(0.0);
        let margin = r_sums[slot] + d_dyn - d_ca + z_quantile * sigma;
        risks.push(ObstacleRisk {
            obstacle_id: *obstacle_id,
            max_cvar: margin,
        });
    }
    evaluate_trigger(risks.as_slice(), kinematics, alpha_total, h_max, a_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn est(position: Vec3, velocity: Vec3, pos_var: f64, sigma_v: f64) -> ObstacleEstimate {
        ObstacleEstimate {
            position,
            velocity,
            position_cov: Mat3::identity() * pos_var,
            sigma_v_los: sigma_v,
            acc_bound: 0.0,
        }
    }

    #[test]
    fn zero_covariance_collapses_to_mean() {
        let uav = UavState::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        let e = est(Vec3::new(5.0, 0.0, 0.0), Vec3::new(-3.0, 0.0, 0.0), 0.0, 0.0);
        let cfg = CvarConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = propagate_samples(&e, &uav, &cfg, &mut rng);
        assert_eq!(samples.len(), cfg.n_samples);
        for s in &samples {
            assert_eq!(s.rel_pos, Vec3::new(5.0, 0.0, 0.0));
            assert_eq!(s.rel_vel, Vec3::new(-4.0, 0.0, 0.0));
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_deterministic() {
        let uav = UavState::new(Vec3::zeros(), Vec3::zeros());
        let e = est(Vec3::new(5.0, 1.0, 0.0), Vec3::new(-3.0, 0.0, 0.0), 0.2, 0.4);
        let cfg = CvarConfig::default();
        let a = propagate_samples(&e, &uav, &cfg, &mut ChaCha8Rng::seed_from_u64(42));
        let b = propagate_samples(&e, &uav, &cfg, &mut ChaCha8Rng::seed_from_u64(42));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rel_pos, y.rel_pos);
            assert_eq!(x.rel_vel, y.rel_vel);
        }
    }

    #[test]
    fn head_on_crossing_at_expected_time() {
        // relative speed 5 m/s head-on from 1 m: the mean range crosses zero
        // at t = 0.2 s
        let uav = UavState::new(Vec3::zeros(), Vec3::zeros());
        let e = est(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-5.0, 0.0, 0.0), 0.0, 0.0);
        let cfg = CvarConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = propagate_samples(&e, &uav, &cfg, &mut rng);
        let mean_range: f64 = samples
            .iter()
            .map(|s| s.rel_pos_at(0.2).norm())
            .sum::<f64>()
            / samples.len() as f64;
        assert_relative_eq!(mean_range, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sampler_matches_requested_moments() {
        let uav = UavState::new(Vec3::zeros(), Vec3::zeros());
        let e = est(Vec3::new(10.0, 0.0, 0.0), Vec3::new(-2.0, 0.0, 0.0), 0.09, 0.5);
        let cfg = CvarConfig {
            n_samples: 20_000,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = propagate_samples(&e, &uav, &cfg, &mut rng);
        let mean_x: f64 =
            samples.iter().map(|s| s.rel_pos.x).sum::<f64>() / samples.len() as f64;
        let var_x: f64 = samples
            .iter()
            .map(|s| (s.rel_pos.x - mean_x).powi(2))
            .sum::<f64>()
            / samples.len() as f64;
        assert_relative_eq!(mean_x, 10.0, epsilon = 0.02);
        assert_relative_eq!(var_x, 0.09, epsilon = 0.01);
        let var_vy: f64 = samples
            .iter()
            .map(|s| (s.rel_vel.y + 0.0).powi(2))
            .sum::<f64>()
            / samples.len() as f64;
        assert_relative_eq!(var_vy, 0.25, epsilon = 0.02);
    }

    #[test]
    fn dynamic_distance_values() {
        let cfg = CvarConfig::default(); // τ = 0.02, decel sum 8
        assert_eq!(dynamic_distance(0.0, &cfg).unwrap(), 0.0);
        assert_relative_eq!(
            dynamic_distance(5.0, &cfg).unwrap(),
            0.1 + 25.0 / 16.0,
            epsilon = 1e-12
        );
        // doubling v quadruples the braking term, doubles the latency term
        let v = 3.0;
        let d1 = dynamic_distance(v, &cfg).unwrap();
        let d2 = dynamic_distance(2.0 * v, &cfg).unwrap();
        let latency1 = v * cfg.tau;
        let brake1 = d1 - latency1;
        assert_relative_eq!(d2, 2.0 * latency1 + 4.0 * brake1, epsilon = 1e-12);
    }

    #[test]
    fn dynamic_distance_rejects_nonpositive_decel() {
        let cfg = CvarConfig {
            uav_decel: 0.0,
            obs_decel: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            dynamic_distance(1.0, &cfg),
            Err(CvarError::InvalidDecel(_))
        ));
    }

    #[test]
    fn violation_term_cases() {
        let cfg = CvarConfig::default();
        let still = [PropagatedSample {
            rel_pos: Vec3::new(0.3, 0.0, 0.0),
            rel_vel: Vec3::zeros(),
        }];
        let z = violation_terms(&still, 0.3, &cfg);
        assert_relative_eq!(z[0][0], 0.0, epsilon = 1e-12);

        let far = [PropagatedSample {
            rel_pos: Vec3::new(10.0, 0.0, 0.0),
            rel_vel: Vec3::zeros(),
        }];
        let z = violation_terms(&far, 0.3, &cfg);
        assert_relative_eq!(z[0][0], 0.3 - 10.0, epsilon = 1e-12);

        let hot = [PropagatedSample {
            rel_pos: Vec3::new(1.0, 0.0, 0.0),
            rel_vel: Vec3::new(-5.0, 0.0, 0.0),
        }];
        let z = violation_terms(&hot, 0.3, &cfg);
        assert_relative_eq!(z[0][0], 0.3 + 1.6625 - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cvar_worst_m_average() {
        let z = [-1.0, -0.5, 0.2, 0.4, 1.0];
        assert_relative_eq!(dr_cvar(&z, 0.4, 0.05, 1.0), 0.75, epsilon = 1e-12);
        // all-equal distribution with ε = 0 is the common value
        assert_relative_eq!(dr_cvar(&[0.3; 7], 0.5, 0.0, 1.0), 0.3, epsilon = 1e-15);
        // β → 1 is the sample mean
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        assert_relative_eq!(dr_cvar(&z, 0.9999, 0.0, 1.0), mean, epsilon = 1e-12);
    }

    #[test]
    fn cvar_monotone_translation_and_upshift() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let beta = rng.gen_range(0.05..0.95);
            let base = dr_cvar(&z, beta, 0.0, 1.0);
            // monotone: bumping one sample never decreases the value
            let mut bumped = z.clone();
            let i = rng.gen_range(0..n);
            bumped[i] += rng.gen_range(0.0..2.0);
            assert!(dr_cvar(&bumped, beta, 0.0, 1.0) >= base - 1e-12);
            // translation equivariance
            let c = rng.gen_range(-2.0..2.0);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            assert_relative_eq!(dr_cvar(&shifted, beta, 0.0, 1.0), base + c, epsilon = 1e-9);
            // ε·L_Z is a pure additive upshift
            let eps = rng.gen_range(0.0..0.5);
            assert_relative_eq!(
                dr_cvar(&z, beta, eps, 2.0),
                base + 2.0 * eps,
                epsilon = 1e-12
            );
            // exceeds the mean
            let mean = z.iter().sum::<f64>() / n as f64;
            assert!(dr_cvar(&z, beta, 0.0, 1.0) >= mean - 1e-12);
        }
    }

    fn rk_head_on(range: f64, closing: f64) -> RelativeKinematics {
        RelativeKinematics {
            rel_pos: Vec3::new(range, 0.0, 0.0),
            rel_vel: Vec3::new(-closing, 0.0, 0.0),
            los_unit: Vec3::new(1.0, 0.0, 0.0),
            range,
            closing_speed: closing,
        }
    }

    #[test]
    fn trigger_holds_when_all_safe() {
        let risks = [
            ObstacleRisk {
                obstacle_id: 0,
                max_cvar: -0.5,
            },
            ObstacleRisk {
                obstacle_id: 1,
                max_cvar: -0.1,
            },
        ];
        let ks = [rk_head_on(20.0, 5.0), rk_head_on(30.0, 2.0)];
        let d = evaluate_trigger(&risks, &ks, 0.10, 0.4, 6.0);
        assert!(!d.fired);
        assert_eq!(d.alpha_override, None);
        assert_eq!(d.h_override, None);
        assert_eq!(d.evasive_nominal, None);
        assert_relative_eq!(d.worst_cvar, -0.1);
    }

    #[test]
    fn trigger_fires_with_overrides() {
        let risks = [ObstacleRisk {
            obstacle_id: 0,
            max_cvar: 0.75,
        }];
        let ks = [rk_head_on(3.0, 8.0)];
        let d = evaluate_trigger(&risks, &ks, 0.10, 0.4, 6.0);
        assert!(d.fired);
        assert_eq!(d.alpha_override, Some(0.05));
        assert_eq!(d.h_override, Some(0.4));
        let ev = d.evasive_nominal.unwrap();
        assert_relative_eq!(ev.norm(), 6.0, epsilon = 1e-9);
        assert!(ev.dot(&ks[0].los_unit).abs() < 1e-9, "perpendicular to LoS");
    }

    #[test]
    fn trigger_uses_most_threatening_obstacle() {
        let risks = [
            ObstacleRisk {
                obstacle_id: 0,
                max_cvar: -0.2,
            },
            ObstacleRisk {
                obstacle_id: 1,
                max_cvar: 0.1,
            },
        ];
        // obstacle 1 sits along +y, so the evasive must be ⊥ to its LoS
        let ks = [
            rk_head_on(10.0, 1.0),
            RelativeKinematics {
                rel_pos: Vec3::new(0.0, 4.0, 0.0),
                rel_vel: Vec3::new(0.0, -6.0, 0.0),
                los_unit: Vec3::new(0.0, 1.0, 0.0),
                range: 4.0,
                closing_speed: 6.0,
            },
        ];
        let d = evaluate_trigger(&risks, &ks, 0.10, 0.4, 6.0);
        assert!(d.fired);
        let ev = d.evasive_nominal.unwrap();
        assert!(ev.dot(&ks[1].los_unit).abs() < 1e-9);
    }

    #[test]
    fn evasive_side_flips_away_from_lateral_drift() {
        // obstacle ahead on +x, drifting toward +z (the up-lateral direction):
        // the UAV must evade toward −z
        let rk = RelativeKinematics {
            rel_pos: Vec3::new(5.0, 0.0, 0.0),
            rel_vel: Vec3::new(-4.0, 0.0, 1.0),
            los_unit: Vec3::new(1.0, 0.0, 0.0),
            range: 5.0,
            closing_speed: 4.0,
        };
        let dir = evasive_direction(&rk);
        assert!(dir.z < 0.0);
        // no drift ties toward +up
        let rk_tie = RelativeKinematics {
            rel_vel: Vec3::new(-4.0, 0.0, 0.0),
            ..rk
        };
        assert!(evasive_direction(&rk_tie).z > 0.0);
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert_relative_eq!(normal_quantile(0.5), 0.0, epsilon = 1e-9);
        assert_relative_eq!(normal_quantile(0.95), 1.6448536269514722, epsilon = 1e-7);
        assert_relative_eq!(normal_quantile(0.975), 1.959963984540054, epsilon = 1e-7);
        assert_relative_eq!(
            normal_quantile(0.01),
            -normal_quantile(0.99),
            epsilon = 1e-9
        );
    }

    #[test]
    fn gaussian_fallback_fires_late_relative_to_cvar() {
        // An approaching obstacle with spread: the Monte Carlo trigger sees
        // worst-tail samples and the Wasserstein upshift; the single-time
        // Gaussian check needs the mean trajectory itself to come close.
        let uav = UavState::new(Vec3::zeros(), Vec3::zeros());
        let cfg = CvarConfig::default();
        let r_sum = 0.3;
        // distance chosen so the mean CPA margin is slightly negative while
        // the tail margin is positive
        let e = est(Vec3::new(8.0, 0.0, 0.0), Vec3::new(-10.0, 0.0, 0.0), 0.25, 1.0);
        let rk = relative_kinematics(&uav, &e).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples = propagate_samples(&e, &uav, &cfg, &mut rng);
        let per_time = violation_terms(&samples, r_sum, &cfg);
        let max_cvar = per_time
            .iter()
            .map(|z| dr_cvar(z, cfg.beta, cfg.epsilon, cfg.l_z))
            .fold(f64::NEG_INFINITY, f64::max);
        let mc = evaluate_trigger(
            &[ObstacleRisk {
                obstacle_id: 0,
                max_cvar,
            }],
            std::slice::from_ref(&rk),
            0.10,
            0.4,
            6.0,
        );
        let fb = single_time_gaussian_trigger(
            &[(0, &e)],
            &uav,
            std::slice::from_ref(&rk),
            &[r_sum],
            &cfg,
            0.10,
            0.4,
            6.0,
        );
        // the Monte Carlo decision value must dominate the Gaussian one
        assert!(
            mc.worst_cvar >= fb.worst_cvar,
            "cvar {} vs gaussian {}",
            mc.worst_cvar,
            fb.worst_cvar
        );
    }

    #[test]
    fn trigger_monotone_in_radius_sum() {
        let uav = UavState::new(Vec3::zeros(), Vec3::zeros());
        let cfg = CvarConfig::default();
        let e = est(Vec3::new(6.0, 0.5, 0.0), Vec3::new(-9.0, 0.0, 0.0), 0.1, 0.5);
        let rk = relative_kinematics(&uav, &e).unwrap();
        let mut fired_small_not_large = false;
        for i in 0..20 {
            let r_small = 0.1 + 0.1 * i as f64;
            let r_large = r_small + 0.5;
            let decide = |r_sum: f64| {
                let mut rng = ChaCha8Rng::seed_from_u64(23);
                let samples = propagate_samples(&e, &uav, &cfg, &mut rng);
                let per_time = violation_terms(&samples, r_sum, &cfg);
                let max_cvar = per_time
                    .iter()
                    .map(|z| dr_cvar(z, cfg.beta, cfg.epsilon, cfg.l_z))
                    .fold(f64::NEG_INFINITY, f64::max);
                evaluate_trigger(
                    &[ObstacleRisk {
                        obstacle_id: 0,
                        max_cvar,
                    }],
                    std::slice::from_ref(&rk),
                    0.10,
                    0.4,
                    6.0,
                )
                .fired
            };
            let small = decide(r_small);
            let large = decide(r_large);
            if small && !large {
                fired_small_not_large = true;
            }
        }
        assert!(
            !fired_small_not_large,
            "enlarging R_sum turned a firing trigger off"
        );
    }
}
