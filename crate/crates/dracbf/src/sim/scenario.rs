//! Scenario configuration: the JSON-loadable description of one simulated
//! mission, plus the per-episode randomization used by batch runs.

use crate::Vec3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("failed to read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Scenario class. `Paper`-class scenarios enforce the evaluation protocol's
/// lower bound of 5 m/s on obstacle speeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioClass {
    Paper,
    #[default]
    Custom,
}

/// One straight-line obstacle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub start: Vec3,
    pub velocity: Vec3,
    pub radius: f64,
}

/// UAV actuation limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Limits {
    /// Speed limit (m/s), Euclidean.
    pub v_max: f64,
    /// Acceleration limit (m/s²), per axis.
    pub a_max: f64,
    /// Jerk limit (m/s³), per axis.
    pub j_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: 10.0,
            a_max: 6.0,
            j_max: 30.0,
        }
    }
}

/// Per-episode randomization drawn by the batch runner: each obstacle's speed
/// is redrawn uniformly (direction preserved) and its start point is shifted
/// perpendicular to its velocity in the horizontal plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Randomization {
    pub speed_min: f64,
    pub speed_max: f64,
    /// Maximum lateral start offset (m), uniform in [−offset_max, offset_max].
    pub offset_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub class: ScenarioClass,
    pub uav_start: Vec3,
    pub uav_goal: Vec3,
    pub uav_radius: f64,
    pub obstacles: Vec<ObstacleSpec>,
    /// Isotropic position measurement noise std (m).
    pub sensor_noise_std: f64,
    /// Obstacles beyond this range produce no measurement (m).
    #[serde(default = "default_sensor_range")]
    pub sensor_range: f64,
    /// Control loop rate (Hz).
    pub control_rate: f64,
    /// Perception-to-actuation latency (s).
    pub latency: f64,
    #[serde(default)]
    pub limits: Limits,
    pub seed: u64,
    #[serde(default)]
    pub randomization: Option<Randomization>,
}

fn default_sensor_range() -> f64 {
    150.0
}

/// Protocol lower bound on obstacle speeds for `Paper`-class scenarios (m/s).
pub const PAPER_V_MIN: f64 = 5.0;

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fin = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !fin(&self.uav_start) || !fin(&self.uav_goal) {
            return Err(ScenarioError::Invalid("non-finite UAV endpoints".into()));
        }
        if self.control_rate <= 0.0 {
            return Err(ScenarioError::Invalid("control_rate must be > 0".into()));
        }
        if self.latency < 0.0 || self.sensor_noise_std < 0.0 {
            return Err(ScenarioError::Invalid(
                "latency and sensor_noise_std must be ≥ 0".into(),
            ));
        }
        if self.uav_radius <= 0.0 {
            return Err(ScenarioError::Invalid("uav_radius must be > 0".into()));
        }
        if self.limits.v_max <= 0.0 || self.limits.a_max <= 0.0 || self.limits.j_max <= 0.0 {
            return Err(ScenarioError::Invalid("limits must be > 0".into()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !fin(&o.start) || !fin(&o.velocity) || !o.radius.is_finite() || o.radius <= 0.0 {
                return Err(ScenarioError::Invalid(format!("obstacle {i} malformed")));
            }
            if self.class == ScenarioClass::Paper && o.velocity.norm() < PAPER_V_MIN {
                return Err(ScenarioError::Invalid(format!(
                    "paper-class scenario requires obstacle speeds ≥ {PAPER_V_MIN} m/s, obstacle {i} moves at {:.2}",
                    o.velocity.norm()
                )));
            }
        }
        if let Some(r) = &self.randomization {
            if !(r.speed_min > 0.0 && r.speed_max >= r.speed_min && r.offset_max >= 0.0) {
                return Err(ScenarioError::Invalid("malformed randomization block".into()));
            }
            if self.class == ScenarioClass::Paper && r.speed_min < PAPER_V_MIN {
                return Err(ScenarioError::Invalid(format!(
                    "paper-class randomization must keep speeds ≥ {PAPER_V_MIN} m/s"
                )));
            }
        }
        Ok(())
    }

    /// Apply the declared randomization with the given generator, producing a
    /// concrete episode scenario. A scenario without a randomization block is
    /// returned unchanged.
    pub fn randomized(&self, rng: &mut impl Rng) -> Scenario {
        let Some(r) = &self.randomization else {
            return self.clone();
        };
        let mut out = self.clone();
        for o in &mut out.obstacles {
            let dir = if o.velocity.norm() > 1e-9 {
                o.velocity.normalize()
            } else {
                Vec3::new(-1.0, 0.0, 0.0)
            };
            let speed = rng.gen_range(r.speed_min..=r.speed_max);
            o.velocity = dir * speed;
            // lateral shift in the horizontal plane, perpendicular to travel
            let up = Vec3::new(0.0, 0.0, 1.0);
            let mut lat = dir.cross(&up);
            if lat.norm() < 1e-6 {
                lat = Vec3::new(0.0, 1.0, 0.0);
            }
            let lat = lat.normalize();
            let offset = rng.gen_range(-r.offset_max..=r.offset_max);
            o.start += lat * offset;
        }
        out
    }
}
