//! Mission state machine: cruise toward the goal, evade on trigger, brake to
//! a hover at the bypass position, hold, then resume the mission.

use crate::drcvar::TriggerDecision;
use crate::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    /// State machine contract violation (programming error).
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Cruise,
    Avoid,
    Brake,
    Hover,
    Hold,
    Resume,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissionConfig {
    /// Time to stop when braking (s).
    pub t_s: f64,
    /// Braking intensity.
    pub k_s: f64,
    /// Lateral clearance from the threat ray that ends the evasive burst (m).
    pub d_cl: f64,
    /// Minimum hold time after an avoid (s).
    pub t_hd: f64,
    /// Goal-tracking PD gains.
    pub k_p: f64,
    pub k_d: f64,
    /// Distance to the start–goal line at which the mission line counts as
    /// rejoined (m).
    pub rejoin_tol: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            t_s: 0.5,
            k_s: 1.0,
            d_cl: 3.0,
            t_hd: 3.0,
            k_p: 1.0,
            k_d: 2.0,
            rejoin_tol: 0.5,
        }
    }
}

/// Straight line a threatening obstacle travels along.
#[derive(Debug, Clone, Copy)]
pub struct ThreatRay {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl ThreatRay {
    fn distance_to(&self, p: Vec3) -> f64 {
        let rel = p - self.origin;
        (rel - self.direction * rel.dot(&self.direction)).norm()
    }
}

#[derive(Debug, Clone)]
pub struct MissionState {
    pub phase: Phase,
    pub phase_entry_time: f64,
    /// Hover anchor once braking completes.
    pub bypass_point: Vec3,
    threat_ray: Option<ThreatRay>,
    evasive: Vec3,
}

impl MissionState {
    pub fn cruise(time: f64) -> Self {
        Self {
            phase: Phase::Cruise,
            phase_entry_time: time,
            bypass_point: Vec3::zeros(),
            threat_ray: None,
            evasive: Vec3::zeros(),
        }
    }
}

/// Everything the state machine reads each cycle besides the trigger.
pub struct MissionContext {
    pub position: Vec3,
    pub velocity: Vec3,
    pub start: Vec3,
    pub goal: Vec3,
    pub time: f64,
    /// Estimated position and velocity of the most threatening obstacle when
    /// the trigger fired this cycle.
    pub threat: Option<(Vec3, Vec3)>,
    /// Speed limit used to cap the PD nominal.
    pub a_max: f64,
}

fn clamp_box(mut a: Vec3, a_max: f64) -> Vec3 {
    for k in 0..3 {
        a[k] = a[k].clamp(-a_max, a_max);
    }
    a
}

fn goal_pd(ctx: &MissionContext, cfg: &MissionConfig) -> Vec3 {
    clamp_box(
        (ctx.goal - ctx.position) * cfg.k_p - ctx.velocity * cfg.k_d,
        ctx.a_max,
    )
}

/// Goal-tracking PD command for the current state, independent of the mission
/// phase. Serves as the reference an avoid action visibly deviates from.
pub fn goal_reference(ctx: &MissionContext, cfg: &MissionConfig) -> Vec3 {
    goal_pd(ctx, cfg)
}

fn hold_pd(ctx: &MissionContext, cfg: &MissionConfig, anchor: Vec3) -> Vec3 {
    clamp_box(
        (anchor - ctx.position) * cfg.k_p - ctx.velocity * cfg.k_d,
        ctx.a_max,
    )
}

fn distance_to_mission_line(ctx: &MissionContext) -> f64 {
    let axis = ctx.goal - ctx.start;
    if axis.norm() < 1e-9 {
        return (ctx.position - ctx.start).norm();
    }
    let u = axis.normalize();
    let rel = ctx.position - ctx.start;
    (rel - u * rel.dot(&u)).norm()
}

fn enter_avoid(ms: &mut MissionState, trigger: &TriggerDecision, ctx: &MissionContext) {
    ms.phase = Phase::Avoid;
    ms.phase_entry_time = ctx.time;
    ms.evasive = trigger.evasive_nominal.unwrap_or(Vec3::zeros());
    ms.threat_ray = ctx.threat.map(|(origin, velocity)| ThreatRay {
        origin,
        direction: if velocity.norm() > 1e-9 {
            velocity.normalize()
        } else {
            // stationary threat: treat its LoS as the ray direction
            (ctx.position - origin).normalize()
        },
    });
}

/// Advance the mission one cycle and emit the phase nominal.
///
/// Transitions: Cruise→Avoid on a fired trigger; Avoid→Brake once the lateral
/// clearance from the threat ray reaches d_cl; Brake→Hover when slow or after
/// t_s; Hover→Hold (anchoring the bypass point); Hold→Resume after t_hd;
/// Resume→Cruise when the start–goal line is rejoined. A trigger firing during
/// Resume re-enters Avoid (a later obstacle can threaten the return leg).
pub fn mission_update(
    ms: &MissionState,
    trigger: &TriggerDecision,
    ctx: &MissionContext,
    cfg: &MissionConfig,
) -> Result<(MissionState, Vec3), MissionError> {
    if ms.phase_entry_time > ctx.time + 1e-9 {
        return Err(MissionError::IllegalTransition(format!(
            "phase entered at {} but clock reads {}",
            ms.phase_entry_time, ctx.time
        )));
    }
    let mut next = ms.clone();
    let nominal = match ms.phase {
        Phase::Cruise => {
            if trigger.fired {
                enter_avoid(&mut next, trigger, ctx);
                next.evasive
            } else {
                goal_pd(ctx, cfg)
            }
        }
        Phase::Avoid => {
            // refresh the evasive command while the trigger keeps firing
            if trigger.fired {
                if let Some(ev) = trigger.evasive_nominal {
                    next.evasive = ev;
                }
                if let Some((origin, velocity)) = ctx.threat {
                    if next.threat_ray.is_none() {
                        next.threat_ray = Some(ThreatRay {
                            origin,
                            direction: if velocity.norm() > 1e-9 {
                                velocity.normalize()
                            } else {
                                (ctx.position - origin).normalize()
                            },
                        });
                    }
                }
            }
            let cleared = next
                .threat_ray
                .map(|ray| ray.distance_to(ctx.position) >= cfg.d_cl)
                .unwrap_or(false);
            if cleared {
                next.phase = Phase::Brake;
                next.phase_entry_time = ctx.time;
                -ctx.velocity * (cfg.k_s / cfg.t_s)
            } else {
                next.evasive
            }
        }
        Phase::Brake => {
            if ctx.velocity.norm() < 0.05 || ctx.time - ms.phase_entry_time >= cfg.t_s {
                next.phase = Phase::Hover;
                next.phase_entry_time = ctx.time;
                next.bypass_point = ctx.position;
                hold_pd(ctx, cfg, next.bypass_point)
            } else {
                -ctx.velocity * (cfg.k_s / cfg.t_s)
            }
        }
        Phase::Hover => {
            next.phase = Phase::Hold;
            next.phase_entry_time = ctx.time;
            hold_pd(ctx, cfg, ms.bypass_point)
        }
        Phase::Hold => {
            if ctx.time - ms.phase_entry_time >= cfg.t_hd {
                next.phase = Phase::Resume;
                next.phase_entry_time = ctx.time;
                goal_pd(ctx, cfg)
            } else {
                hold_pd(ctx, cfg, ms.bypass_point)
            }
        }
        Phase::Resume => {
            if trigger.fired {
                enter_avoid(&mut next, trigger, ctx);
                next.evasive
            } else if distance_to_mission_line(ctx) <= cfg.rejoin_tol {
                next.phase = Phase::Cruise;
                next.phase_entry_time = ctx.time;
                goal_pd(ctx, cfg)
            } else {
                goal_pd(ctx, cfg)
            }
        }
    };
    Ok((next, nominal))
}
