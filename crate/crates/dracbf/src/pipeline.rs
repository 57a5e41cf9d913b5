//! Per-cycle safety-filter pipeline.
//!
//! One [`SafetyFilter::step`] runs the full avoidance chain on the current
//! estimates: obstacle-acceleration envelopes (differentiator), the early
//! warning trigger, risk allocation, horizon search, constraint construction,
//! and the projection that turns the mission nominal into the safe command.
//! The call is instrumented so a harness can report per-step pipeline time;
//! all stochastic stages derive their generators from the episode seed,
//! obstacle id, and step index, so results do not depend on scheduling.

use crate::acbf::{
    effective_clearance, select_horizon, tightened_halfspace, ClearanceParams, HalfSpace,
    HorizonConfig,
};
use crate::drcvar::{
    dr_cvar, evaluate_trigger, propagate_samples, single_time_gaussian_trigger, violation_terms,
    CvarConfig, ObstacleRisk, TriggerDecision,
};
use crate::projection::{gauss_southwell_project, ProjectionConfig};
use crate::qp::{clf_cbf_qp_step, ClfTerms, QpProblem};
use crate::relkin::{los_sigma, relative_kinematics, ObstacleEstimate, RelativeKinematics, UavState};
use crate::risk::{RiskAllocation, DEFAULT_EPS};
use crate::sim::mission::{mission_update, MissionConfig, MissionContext, MissionState};
use crate::smd::{smd_step, update_acc_bound, SmdGains, SmdState};
use crate::Vec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Which safety filter runs the avoidance chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterChoice {
    /// Half-space constraints with the Monte Carlo early warning and the
    /// fixed-budget projection.
    DrAcbf,
    /// Classical CLF-CBF-QP on the velocity-composed barrier, same clearance
    /// and tightening, exact QP solve.
    CbfQp,
    /// Half-space filter with the single-time Gaussian fallback trigger
    /// instead of the Monte Carlo layer (ablation arm).
    NoCvar,
}

impl FilterChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterChoice::DrAcbf => "dr-acbf",
            FilterChoice::CbfQp => "cbf-qp",
            FilterChoice::NoCvar => "no-cvar",
        }
    }
}

impl std::str::FromStr for FilterChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dr-acbf" => Ok(FilterChoice::DrAcbf),
            "cbf-qp" => Ok(FilterChoice::CbfQp),
            "no-cvar" => Ok(FilterChoice::NoCvar),
            other => Err(format!(
                "unknown filter {other:?} (expected dr-acbf, cbf-qp, or no-cvar)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Global per-step risk budget α_total ∈ (0,1).
    pub alpha_total: f64,
    /// ε in the closing-speed normalization of the risk weights.
    pub risk_eps: f64,
    pub horizon: HorizonConfig,
    pub cvar: CvarConfig,
    pub smd: SmdGains,
    /// Projection relaxation and budget.
    pub omega: f64,
    pub base_iters: usize,
    /// Obstacle-acceleration envelope floor (m/s²): padding applied before
    /// the differentiator has converged.
    pub acc_bound_floor: f64,
    /// UAV limits and latency entering the effective clearance.
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    pub latency: f64,
    /// CLF terms for the QP baseline.
    pub clf_kp: f64,
    pub clf_decay: f64,
    pub clf_slack_weight: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            alpha_total: 0.10,
            risk_eps: DEFAULT_EPS,
            horizon: HorizonConfig::default(),
            cvar: CvarConfig::default(),
            smd: SmdGains::default(),
            omega: 1.0,
            base_iters: 12,
            acc_bound_floor: 1.0,
            v_max: 10.0,
            a_max: 6.0,
            j_max: 30.0,
            latency: 0.02,
            clf_kp: 1.0,
            clf_decay: 1.0,
            clf_slack_weight: 10.0,
        }
    }
}

impl FilterConfig {
    pub fn projection(&self) -> ProjectionConfig {
        ProjectionConfig {
            omega: self.omega,
            base_iters: self.base_iters,
            a_max: self.a_max,
        }
    }

    pub fn clearance(&self, r_sum: f64) -> ClearanceParams {
        ClearanceParams {
            r_sum,
            v_max: self.v_max,
            a_max: self.a_max,
            j_max: self.j_max,
            latency: self.latency,
        }
    }

    /// Tie the prediction window to the longest constraint horizon.
    pub fn tie_prediction_window(&mut self) {
        self.cvar.pred_horizon = self.horizon.h_max;
    }
}

/// Everything an episode loop needs from one filter cycle.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Safe acceleration command to actuate.
    pub command: Vec3,
    /// Phase nominal that was projected.
    pub nominal: Vec3,
    /// Goal-tracking reference regardless of phase; deviations of the applied
    /// acceleration from this mark the first detectable avoid action.
    pub cruise_reference: Vec3,
    pub trigger: TriggerDecision,
    /// Most threatening obstacle this cycle (only when fired).
    pub threat_id: Option<usize>,
    /// Lookahead horizon used for the constraints.
    pub horizon: f64,
    /// Residual constraint violation of the command.
    pub max_violation: f64,
    /// Violation exceeded the scale-aware feasibility tolerance.
    pub infeasible: bool,
    /// Next mission state.
    pub mission: MissionState,
    /// Wall time of the avoidance pipeline for this cycle (ns).
    pub pipeline_nanos: u64,
    /// Wall time from the trigger evaluation to the safe command being ready
    /// (ns); meaningful in the cycle where the trigger first fires.
    pub command_nanos: u64,
}

struct Channel {
    smd: SmdState,
    acc_bound: f64,
}

/// Stateful per-episode filter: owns one differentiator and envelope per
/// obstacle and the deterministic seeding of the Monte Carlo layer.
pub struct SafetyFilter {
    pub cfg: FilterConfig,
    pub choice: FilterChoice,
    mission_cfg: MissionConfig,
    r_sums: Vec<f64>,
    dt: f64,
    episode_seed: u64,
    step_index: u64,
    channels: Vec<Channel>,
}

fn mix_seed(episode: u64, obstacle: u64, step: u64) -> u64 {
    // avalanche the three indices so consecutive streams are unrelated
    let mut x = episode
        ^ obstacle.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ step.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl SafetyFilter {
    /// `r_sums[i]` is the combined radius of the UAV and obstacle `i`.
    pub fn new(
        cfg: FilterConfig,
        choice: FilterChoice,
        mission_cfg: MissionConfig,
        r_sums: Vec<f64>,
        dt: f64,
        episode_seed: u64,
    ) -> Self {
        let channels = r_sums
            .iter()
            .map(|_| Channel {
                smd: SmdState::default(),
                acc_bound: cfg.acc_bound_floor,
            })
            .collect();
        Self {
            cfg,
            choice,
            mission_cfg,
            r_sums,
            dt,
            episode_seed,
            step_index: 0,
            channels,
        }
    }

    pub fn mission_cfg(&self) -> &MissionConfig {
        &self.mission_cfg
    }

    /// Run one control cycle. `estimates[i]` is `None` until obstacle `i` has
    /// been detected. `start`/`goal` frame the mission; `time` is the
    /// simulation clock.
    pub fn step(
        &mut self,
        uav: &UavState,
        estimates: &[Option<ObstacleEstimate>],
        mission: &MissionState,
        start: Vec3,
        goal: Vec3,
        time: f64,
    ) -> StepOutput {
        let t0 = Instant::now();
        let step = self.step_index;
        self.step_index += 1;

        // differentiator and envelope update, then LoS geometry per obstacle
        let mut visible: Vec<(usize, ObstacleEstimate, RelativeKinematics)> = Vec::new();
        for (id, slot) in estimates.iter().enumerate() {
            let Some(est) = slot else { continue };
            let ch = &mut self.channels[id];
            ch.smd = smd_step(&ch.smd, est.velocity, self.dt, &self.cfg.smd);
            ch.acc_bound = update_acc_bound(ch.acc_bound, &ch.smd);
            let mut est = est.clone();
            est.acc_bound = ch.acc_bound;
            match relative_kinematics(uav, &est) {
                Ok(rk) => visible.push((id, est, rk)),
                Err(_) => continue, // coincident: the harness scores the collision
            }
        }

        let kinematics: Vec<RelativeKinematics> =
            visible.iter().map(|(_, _, rk)| rk.clone()).collect();

        // early warning
        let trigger = match self.choice {
            FilterChoice::DrAcbf | FilterChoice::CbfQp => {
                let mut risks = Vec::with_capacity(visible.len());
                for (id, est, _) in &visible {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix_seed(self.episode_seed, *id as u64, step));
                    let samples = propagate_samples(est, uav, &self.cfg.cvar, &mut rng);
                    let per_time = violation_terms(&samples, self.r_sums[*id], &self.cfg.cvar);
                    let max_cvar = per_time
                        .iter()
                        .map(|z| {
                            dr_cvar(z, self.cfg.cvar.beta, self.cfg.cvar.epsilon, self.cfg.cvar.l_z)
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    risks.push(ObstacleRisk {
                        obstacle_id: *id,
                        max_cvar,
                    });
                }
                evaluate_trigger(
                    &risks,
                    &kinematics,
                    self.cfg.alpha_total,
                    self.cfg.horizon.h_max,
                    self.cfg.a_max,
                )
            }
            FilterChoice::NoCvar => {
                let refs: Vec<(usize, &ObstacleEstimate)> =
                    visible.iter().map(|(id, est, _)| (*id, est)).collect();
                let r_sums: Vec<f64> = visible.iter().map(|(id, _, _)| self.r_sums[*id]).collect();
                single_time_gaussian_trigger(
                    &refs,
                    uav,
                    &kinematics,
                    &r_sums,
                    &self.cfg.cvar,
                    self.cfg.alpha_total,
                    self.cfg.horizon.h_max,
                    self.cfg.a_max,
                )
            }
        };
        let threat_id = if trigger.fired {
            // the trigger picked the obstacle whose LoS shaped the evasive;
            // recover it as the eligible obstacle closest in decision value
            self.most_threatening(&visible, uav, &trigger)
        } else {
            None
        };
        let t_trigger = Instant::now();

        // mission phase and nominal
        let ctx = MissionContext {
            position: uav.position,
            velocity: uav.velocity,
            start,
            goal,
            time,
            threat: threat_id.and_then(|id| {
                visible
                    .iter()
                    .find(|(i, _, _)| *i == id)
                    .map(|(_, est, _)| (est.position, est.velocity))
            }),
            a_max: self.cfg.a_max,
        };
        let (next_mission, nominal) = mission_update(mission, &trigger, &ctx, &self.mission_cfg)
            .expect("mission clock is monotone");
        let cruise_reference = crate::sim::mission::goal_reference(&ctx, &self.mission_cfg);

        // risk allocation with the one-cycle override
        let alpha_eff = trigger.alpha_override.unwrap_or(self.cfg.alpha_total);
        let allocation = if kinematics.is_empty() {
            None
        } else {
            Some(
                RiskAllocation::compute(&kinematics, alpha_eff, self.cfg.risk_eps)
                    .expect("non-empty obstacle set"),
            )
        };

        // horizon: the trigger pins it high for one cycle, otherwise coarse search
        let proj_cfg = self.cfg.projection();
        let build = |h: f64| -> Vec<HalfSpace> {
            let Some(alloc) = &allocation else {
                return Vec::new();
            };
            visible
                .iter()
                .enumerate()
                .map(|(slot, (id, est, rk))| {
                    let cp = self.cfg.clearance(self.r_sums[*id]);
                    let r_eff = effective_clearance(&cp, h, est.acc_bound);
                    let sigma = los_sigma(
                        &uav.position_cov,
                        &est.position_cov,
                        &rk.los_unit,
                        h,
                        est.sigma_v_los,
                    )
                    .unwrap_or(0.0);
                    tightened_halfspace(rk, r_eff, h, alloc.lambdas[slot], sigma, *id)
                })
                .collect()
        };
        let horizon = match trigger.h_override {
            Some(h) => h,
            None => select_horizon(&self.cfg.horizon, &build, nominal, &proj_cfg),
        };
        let constraints = build(horizon);

        // safe command
        let feas_tol = crate::acbf::horizon_feasibility_tol(horizon);
        let (command, max_violation) = match self.choice {
            FilterChoice::DrAcbf | FilterChoice::NoCvar => {
                let p = gauss_southwell_project(nominal, &constraints, &proj_cfg);
                (p.acc, p.max_violation)
            }
            FilterChoice::CbfQp => self.qp_command(uav, goal, nominal, &visible, &allocation),
        };
        let t1 = Instant::now();

        StepOutput {
            command,
            nominal,
            cruise_reference,
            trigger,
            threat_id,
            horizon,
            max_violation,
            infeasible: max_violation > feas_tol,
            mission: next_mission,
            pipeline_nanos: (t1 - t0).as_nanos() as u64,
            command_nanos: (t1 - t_trigger).as_nanos() as u64,
        }
    }

    fn most_threatening(
        &self,
        visible: &[(usize, ObstacleEstimate, RelativeKinematics)],
        _uav: &UavState,
        trigger: &TriggerDecision,
    ) -> Option<usize> {
        // the evasive direction is perpendicular to the chosen obstacle's LoS;
        // pick the visible obstacle whose LoS is most orthogonal to it
        let ev = trigger.evasive_nominal?;
        visible
            .iter()
            .map(|(id, _, rk)| (*id, rk.los_unit.dot(&ev).abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(id, _)| id)
    }

    /// CLF-CBF-QP baseline command: velocity-composed barrier rows with the
    /// same clearance and tightening, κ = 1/H_max, exact solve. Falls back to
    /// the projector when the rows conflict.
    fn qp_command(
        &self,
        uav: &UavState,
        goal: Vec3,
        nominal: Vec3,
        visible: &[(usize, ObstacleEstimate, RelativeKinematics)],
        allocation: &Option<RiskAllocation>,
    ) -> (Vec3, f64) {
        let kappa = 1.0 / self.cfg.horizon.h_max;
        let h_for_pad = self.cfg.horizon.h_max;
        let mut rows = Vec::with_capacity(visible.len());
        if let Some(alloc) = allocation {
            for (slot, (id, est, rk)) in visible.iter().enumerate() {
                let cp = self.cfg.clearance(self.r_sums[*id]);
                let r_eff = effective_clearance(&cp, h_for_pad, est.acc_bound);
                let sigma = los_sigma(
                    &uav.position_cov,
                    &est.position_cov,
                    &rk.los_unit,
                    h_for_pad,
                    est.sigma_v_los,
                )
                .unwrap_or(0.0);
                let rho = r_eff + alloc.lambdas[slot] * sigma;
                let h_bar = rk.range * rk.range - rho * rho;
                let pv = rk.rel_pos.dot(&rk.rel_vel);
                let bound = (2.0 * rk.rel_vel.norm_squared()
                    + 4.0 * kappa * pv
                    + kappa * kappa * h_bar)
                    / (2.0 * rk.range);
                rows.push(HalfSpace {
                    normal: rk.los_unit,
                    bound,
                    obstacle_id: *id,
                });
            }
        }
        let v_des = (goal - uav.position) * self.cfg.clf_kp;
        let v_err = uav.velocity - v_des;
        let clf = ClfTerms {
            grad: v_err,
            drift: self.cfg.clf_kp * v_err.dot(&uav.velocity),
            decay: self.cfg.clf_decay,
            value: 0.5 * v_err.norm_squared(),
            slack_weight: self.cfg.clf_slack_weight,
        };
        let problem = QpProblem {
            nominal,
            halfspaces: rows.clone(),
            a_max: self.cfg.a_max,
            clf: Some(clf),
        };
        match clf_cbf_qp_step(&problem) {
            Ok(sol) => {
                let viol = crate::projection::max_violation(&sol.u_star, &rows).max(0.0);
                (sol.u_star, viol)
            }
            Err(_) => {
                let p = gauss_southwell_project(nominal, &rows, &self.cfg.projection());
                (p.acc, p.max_violation.max(1.0)) // flag the conflict
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Mat3;

    fn est(position: Vec3, velocity: Vec3) -> ObstacleEstimate {
        ObstacleEstimate {
            position,
            velocity,
            position_cov: Mat3::identity() * 0.01,
            sigma_v_los: 0.1,
            acc_bound: 0.0,
        }
    }

    fn filter(choice: FilterChoice) -> SafetyFilter {
        SafetyFilter::new(
            FilterConfig::default(),
            choice,
            MissionConfig::default(),
            vec![0.3],
            0.01,
            42,
        )
    }

    #[test]
    fn far_obstacle_passes_nominal_through() {
        let mut f = filter(FilterChoice::DrAcbf);
        let uav = UavState::new(Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0));
        let mission = MissionState::cruise(0.0);
        let goal = Vec3::new(100.0, 0.0, 0.0);
        let out = f.step(
            &uav,
            &[Some(est(Vec3::new(90.0, 0.0, 0.0), Vec3::new(-6.0, 0.0, 0.0)))],
            &mission,
            Vec3::zeros(),
            goal,
            0.0,
        );
        assert!(!out.trigger.fired);
        assert_eq!(out.horizon, f.cfg.horizon.h_max);
        assert!((out.command - out.nominal).norm() < 1e-9);
        assert!(!out.infeasible);
    }

    #[test]
    fn imminent_obstacle_fires_and_respects_constraints() {
        let mut f = filter(FilterChoice::DrAcbf);
        let uav = UavState::new(Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0));
        let mission = MissionState::cruise(0.0);
        let goal = Vec3::new(100.0, 0.0, 0.0);
        let out = f.step(
            &uav,
            &[Some(est(Vec3::new(4.0, 0.0, 0.0), Vec3::new(-8.0, 0.0, 0.0)))],
            &mission,
            Vec3::zeros(),
            goal,
            0.0,
        );
        assert!(out.trigger.fired);
        assert_eq!(out.threat_id, Some(0));
        assert_eq!(out.horizon, f.cfg.horizon.h_max);
        // the command must not push toward the obstacle beyond the bound
        assert!(out.command.amax() <= f.cfg.a_max + 1e-9);
        assert!(matches!(out.mission.phase, crate::sim::mission::Phase::Avoid));
    }

    #[test]
    fn step_is_deterministic_for_fixed_seed() {
        let run = || {
            let mut f = filter(FilterChoice::DrAcbf);
            let uav = UavState::new(Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0));
            let mut mission = MissionState::cruise(0.0);
            let mut outs = Vec::new();
            for k in 0..20 {
                let out = f.step(
                    &uav,
                    &[Some(est(
                        Vec3::new(12.0 - k as f64 * 0.1, 0.3, 0.0),
                        Vec3::new(-9.0, 0.0, 0.0),
                    ))],
                    &mission,
                    Vec3::zeros(),
                    Vec3::new(100.0, 0.0, 0.0),
                    k as f64 * 0.01,
                );
                mission = out.mission.clone();
                outs.push((out.command, out.trigger.fired, out.horizon));
            }
            outs
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn acc_bound_envelope_is_monotone_across_steps() {
        let mut f = filter(FilterChoice::DrAcbf);
        let uav = UavState::new(Vec3::zeros(), Vec3::zeros());
        let mut mission = MissionState::cruise(0.0);
        let mut prev = 0.0;
        for k in 0..100 {
            // steadily accelerating obstacle: the differentiator must push the
            // envelope above the floor
            let v = Vec3::new(-8.0 - 3.0 * k as f64 * 0.01, 0.0, 0.0);
            let out = f.step(
                &uav,
                &[Some(est(Vec3::new(60.0, 0.0, 0.0), v))],
                &mission,
                Vec3::zeros(),
                Vec3::new(100.0, 0.0, 0.0),
                k as f64 * 0.01,
            );
            mission = out.mission.clone();
            let bound = f.channels[0].acc_bound;
            assert!(bound >= prev);
            assert!(bound >= f.cfg.acc_bound_floor);
            prev = bound;
        }
        assert!(prev > f.cfg.acc_bound_floor, "envelope never expanded");
    }

    #[test]
    fn qp_baseline_matches_projection_when_inactive() {
        let mut qp = filter(FilterChoice::CbfQp);
        let mut gs = filter(FilterChoice::DrAcbf);
        let uav = UavState::new(Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0));
        let mission = MissionState::cruise(0.0);
        let goal = Vec3::new(100.0, 0.0, 0.0);
        let far = [Some(est(Vec3::new(120.0, 5.0, 0.0), Vec3::new(-6.0, 0.0, 0.0)))];
        let a = qp.step(&uav, &far, &mission, Vec3::zeros(), goal, 0.0);
        let b = gs.step(&uav, &far, &mission, Vec3::zeros(), goal, 0.0);
        assert!((a.command - b.command).norm() < 1e-6);
    }
}
