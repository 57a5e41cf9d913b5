//! Single-episode runner: steps the world against the chosen safety filter
//! and collects the avoidance metrics.

use crate::harness::metrics::{FailReason, RunMetrics};
use crate::pipeline::{FilterChoice, FilterConfig, SafetyFilter};
use crate::sim::mission::{MissionConfig, MissionState, Phase};
use crate::sim::scenario::Scenario;
use crate::sim::tracker::{tracker_step, TrackerState};
use crate::sim::world::World;
use serde::Serialize;

/// Episode wall-time cap in simulated seconds; exceeding it is a failure.
pub const TIMEOUT_S: f64 = 60.0;

/// Reaching within this distance of the goal ends the episode successfully (m).
pub const GOAL_TOL: f64 = 0.5;

/// Applied-acceleration deviation from the goal-tracking reference that counts
/// as the first detectable avoid action (m/s²).
pub const REACTION_THRESHOLD: f64 = 0.1;

/// Tracker process-noise intensity (m²/s³); tuned so velocity estimates settle
/// within about a second at the default sensor noise.
pub const TRACKER_PROCESS_NOISE: f64 = 1.0;

/// Per-step trace row for verbose single runs.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub time_s: f64,
    pub phase: Phase,
    pub fired: bool,
    pub horizon_s: f64,
    pub max_violation: f64,
    pub min_separation_m: f64,
    pub uav_x: f64,
    pub uav_y: f64,
    pub uav_z: f64,
    pub speed_mps: f64,
}

/// Run one episode. The scenario must already carry its per-episode seed and
/// randomization outcome; use [`crate::sim::scenario::Scenario::randomized`]
/// for batches.
pub fn run_episode(
    scenario: &Scenario,
    filter_cfg: &FilterConfig,
    mission_cfg: &MissionConfig,
    choice: FilterChoice,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> RunMetrics {
    let mut world = World::new(scenario);
    let dt = world.dt();
    let n_obstacles = world.obstacles.len();
    let r_sums: Vec<f64> = world
        .obstacles
        .iter()
        .map(|o| world.uav_radius + o.radius)
        .collect();
    let mut filter = SafetyFilter::new(
        filter_cfg.clone(),
        choice,
        mission_cfg.clone(),
        r_sums,
        dt,
        scenario.seed,
    );
    let mut mission = MissionState::cruise(0.0);
    let mut trackers: Vec<Option<TrackerState>> = vec![None; n_obstacles];
    let mut first_detection: Vec<Option<f64>> = vec![None; n_obstacles];

    let mut min_separation = f64::INFINITY;
    let mut pipeline_nanos: Vec<u64> = Vec::new();
    let mut infeasibility_events = 0u32;

    let mut trigger_time: Option<f64> = None;
    let mut threat_at_trigger: Option<usize> = None;
    let mut v_cl_at_trigger: Option<f64> = None;
    let mut t_cm_ms: Option<f64> = None;
    let mut t_r_ms: Option<f64> = None;
    let mut t_a_ms: Option<f64> = None;
    let mut t_d_ms: Option<f64> = None;

    let mut outcome: Option<(bool, Option<FailReason>)> = None;
    let max_steps = (TIMEOUT_S / dt).ceil() as usize;

    min_separation = min_separation.min(world.min_separation());

    for _ in 0..max_steps {
        let time = world.time;

        // sense and track
        let measurements = world.measure();
        let mut estimates = Vec::with_capacity(n_obstacles);
        for (i, z) in measurements.into_iter().enumerate() {
            match (&mut trackers[i], z) {
                (slot @ None, Some(z)) => {
                    *slot = Some(TrackerState::initialize(
                        z,
                        TRACKER_PROCESS_NOISE,
                        scenario.sensor_noise_std,
                    ));
                    first_detection[i].get_or_insert(time);
                }
                (Some(ts), z) => {
                    tracker_step(ts, z, dt);
                }
                (None, None) => {}
            }
            estimates.push(
                trackers[i]
                    .as_ref()
                    .map(|ts| ts.estimate(&world.uav_state(), 0.0)),
            );
        }

        // filter
        let uav_state = world.uav_state();
        let out = filter.step(
            &uav_state,
            &estimates,
            &mission,
            scenario.uav_start,
            world.goal,
            time,
        );
        mission = out.mission.clone();
        pipeline_nanos.push(out.pipeline_nanos);
        if out.infeasible {
            infeasibility_events += 1;
        }

        // first trigger bookkeeping
        if out.trigger.fired && trigger_time.is_none() {
            trigger_time = Some(time);
            threat_at_trigger = out.threat_id;
            t_cm_ms = Some(out.command_nanos as f64 / 1e6);
            if let Some(id) = out.threat_id {
                let o = &world.obstacles[id];
                let rel = o.position - world.uav.position;
                let d = rel.norm();
                if d > 1e-9 {
                    let closing = (-(rel / d).dot(&(o.velocity - world.uav.velocity))).max(0.0);
                    v_cl_at_trigger = Some(closing);
                }
                t_d_ms = first_detection[id].map(|det| (time - det) * 1e3);
            }
        }

        // actuate
        world.step(out.command);
        min_separation = min_separation.min(world.min_separation());

        // reaction detection: applied acceleration visibly departs from the
        // goal-tracking reference after the trigger
        if let Some(t0) = trigger_time {
            if t_r_ms.is_none()
                && (world.uav.acceleration - out.cruise_reference).norm() > REACTION_THRESHOLD
            {
                t_r_ms = Some((world.time - t0) * 1e3);
            }
            if t_a_ms.is_none() && mission.phase == Phase::Resume {
                t_a_ms = Some((world.time - t0) * 1e3);
            }
        }

        if let Some(rows) = trace.as_deref_mut() {
            rows.push(TraceRow {
                time_s: world.time,
                phase: mission.phase,
                fired: out.trigger.fired,
                horizon_s: out.horizon,
                max_violation: out.max_violation,
                min_separation_m: world.min_separation(),
                uav_x: world.uav.position.x,
                uav_y: world.uav.position.y,
                uav_z: world.uav.position.z,
                speed_mps: world.uav.velocity.norm(),
            });
        }

        if world.in_collision() {
            outcome = Some((false, Some(FailReason::Collision)));
            break;
        }
        if (world.uav.position - world.goal).norm() < GOAL_TOL {
            outcome = Some((true, None));
            break;
        }
    }

    let (success, fail_reason) = outcome.unwrap_or((false, Some(FailReason::Timeout)));
    let t_cp_ms = if pipeline_nanos.is_empty() {
        0.0
    } else {
        pipeline_nanos.iter().sum::<u64>() as f64 / pipeline_nanos.len() as f64 / 1e6
    };
    let _ = threat_at_trigger;

    RunMetrics {
        success,
        fail_reason,
        v_cl_at_trigger,
        t_r_ms,
        t_cm_ms,
        t_cp_ms,
        d_s_m: if n_obstacles == 0 {
            None
        } else {
            Some(min_separation)
        },
        t_a_ms,
        t_d_ms,
        infeasibility_events,
    }
}

/// Per-step pipeline wall times for one episode; used by the timing checks.
pub fn episode_step_times(
    scenario: &Scenario,
    filter_cfg: &FilterConfig,
    mission_cfg: &MissionConfig,
    choice: FilterChoice,
) -> Vec<u64> {
    let mut world = World::new(scenario);
    let dt = world.dt();
    let n_obstacles = world.obstacles.len();
    let r_sums: Vec<f64> = world
        .obstacles
        .iter()
        .map(|o| world.uav_radius + o.radius)
        .collect();
    let mut filter = SafetyFilter::new(
        filter_cfg.clone(),
        choice,
        mission_cfg.clone(),
        r_sums,
        dt,
        scenario.seed,
    );
    let mut mission = MissionState::cruise(0.0);
    let mut trackers: Vec<Option<TrackerState>> = vec![None; n_obstacles];
    let mut times = Vec::new();
    let max_steps = (TIMEOUT_S / dt).ceil() as usize;
    for _ in 0..max_steps {
        let time = world.time;
        let measurements = world.measure();
        let mut estimates = Vec::with_capacity(n_obstacles);
        for (i, z) in measurements.into_iter().enumerate() {
            match (&mut trackers[i], z) {
                (slot @ None, Some(z)) => {
                    *slot = Some(TrackerState::initialize(
                        z,
                        TRACKER_PROCESS_NOISE,
                        scenario.sensor_noise_std,
                    ));
                }
                (Some(ts), z) => tracker_step(ts, z, dt),
                (None, None) => {}
            }
            estimates.push(
                trackers[i]
                    .as_ref()
                    .map(|ts| ts.estimate(&world.uav_state(), 0.0)),
            );
        }
        let uav_state = world.uav_state();
        let out = filter.step(
            &uav_state,
            &estimates,
            &mission,
            scenario.uav_start,
            world.goal,
            time,
        );
        mission = out.mission.clone();
        times.push(out.pipeline_nanos);
        world.step(out.command);
        if world.in_collision() || (world.uav.position - world.goal).norm() < GOAL_TOL {
            break;
        }
    }
    times
}
