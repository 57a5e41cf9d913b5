//! Deterministic seeded world: double-integrator UAV under latency, jerk,
//! acceleration, and speed limits; straight-line obstacles; noisy position
//! measurements.

use crate::relkin::UavState;
use crate::sim::scenario::Scenario;
use crate::{Mat3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::VecDeque;

/// Commands are applied exactly ⌈Δ·rate⌉ control steps after issue.
#[derive(Debug, Clone)]
pub struct LatencyBuffer {
    queue: VecDeque<Vec3>,
    depth: usize,
}

impl LatencyBuffer {
    pub fn new(latency: f64, control_rate: f64) -> Self {
        let depth = (latency * control_rate).ceil() as usize;
        let mut queue = VecDeque::with_capacity(depth + 1);
        for _ in 0..depth {
            queue.push_back(Vec3::zeros());
        }
        Self { queue, depth }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Enqueue a fresh command and pop the one due for actuation this step.
    pub fn push(&mut self, command: Vec3) -> Vec3 {
        if self.depth == 0 {
            return command;
        }
        self.queue.push_back(command);
        self.queue.pop_front().expect("queue pre-filled to depth")
    }
}

#[derive(Debug, Clone)]
pub struct UavBody {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Actuated acceleration after slew and clamping.
    pub acceleration: Vec3,
}

#[derive(Debug, Clone)]
pub struct ObstacleBody {
    pub position: Vec3,
    pub velocity: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct World {
    pub time: f64,
    pub uav: UavBody,
    pub obstacles: Vec<ObstacleBody>,
    pub goal: Vec3,
    pub uav_radius: f64,
    v_max: f64,
    a_max: f64,
    j_max: f64,
    dt: f64,
    sensor_noise_std: f64,
    sensor_range: f64,
    latency: LatencyBuffer,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            time: 0.0,
            uav: UavBody {
                position: scenario.uav_start,
                velocity: Vec3::zeros(),
                acceleration: Vec3::zeros(),
            },
            obstacles: scenario
                .obstacles
                .iter()
                .map(|o| ObstacleBody {
                    position: o.start,
                    velocity: o.velocity,
                    radius: o.radius,
                })
                .collect(),
            goal: scenario.uav_goal,
            uav_radius: scenario.uav_radius,
            v_max: scenario.limits.v_max,
            a_max: scenario.limits.a_max,
            j_max: scenario.limits.j_max,
            dt: scenario.dt(),
            sensor_noise_std: scenario.sensor_noise_std,
            sensor_range: scenario.sensor_range,
            latency: LatencyBuffer::new(scenario.latency, scenario.control_rate),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// UAV state as seen by the filter (perfect self-localization).
    pub fn uav_state(&self) -> UavState {
        UavState {
            position: self.uav.position,
            velocity: self.uav.velocity,
            position_cov: Mat3::zeros(),
        }
    }

    /// Advance one control period under the issued command. The command is
    /// delayed by the latency queue, slewed per axis at the jerk limit,
    /// clamped to the acceleration box, then integrated; the speed is
    /// norm-clamped afterward. Obstacles fly straight.
    pub fn step(&mut self, command: Vec3) {
        let target = self.latency.push(command);
        let max_delta = self.j_max * self.dt;
        for k in 0..3 {
            let delta = (target[k] - self.uav.acceleration[k]).clamp(-max_delta, max_delta);
            self.uav.acceleration[k] =
                (self.uav.acceleration[k] + delta).clamp(-self.a_max, self.a_max);
        }
        self.uav.velocity += self.uav.acceleration * self.dt;
        let speed = self.uav.velocity.norm();
        if speed > self.v_max {
            self.uav.velocity *= self.v_max / speed;
        }
        self.uav.position += self.uav.velocity * self.dt;
        for o in &mut self.obstacles {
            o.position += o.velocity * self.dt;
        }
        self.time += self.dt;
    }

    /// Noisy position measurement per obstacle; `None` beyond sensor range.
    pub fn measure(&mut self) -> Vec<Option<Vec3>> {
        let uav_pos = self.uav.position;
        let std = self.sensor_noise_std;
        let range = self.sensor_range;
        let rng = &mut self.rng;
        self.obstacles
            .iter()
            .map(|o| {
                if (o.position - uav_pos).norm() > range {
                    // keep the noise stream aligned regardless of visibility
                    let _: (f64, f64, f64) = (
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    );
                    return None;
                }
                let noise = Vec3::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ) * std;
                Some(o.position + noise)
            })
            .collect()
    }

    /// Smallest true center distance to any obstacle, or +∞ without obstacles.
    pub fn min_separation(&self) -> f64 {
        self.obstacles
            .iter()
            .map(|o| (o.position - self.uav.position).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// True center distance below the radius sum for any obstacle.
    pub fn in_collision(&self) -> bool {
        self.obstacles
            .iter()
            .any(|o| (o.position - self.uav.position).norm() < self.uav_radius + o.radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::{Limits, ObstacleSpec, ScenarioClass};
    use approx::assert_relative_eq;

    fn scenario(latency: f64, noise: f64) -> Scenario {
        Scenario {
            name: "world-test".into(),
            class: ScenarioClass::Custom,
            uav_start: Vec3::zeros(),
            uav_goal: Vec3::new(100.0, 0.0, 0.0),
            uav_radius: 0.15,
            obstacles: vec![ObstacleSpec {
                start: Vec3::new(50.0, 0.0, 0.0),
                velocity: Vec3::new(-5.0, 0.0, 0.0),
                radius: 0.15,
            }],
            sensor_noise_std: noise,
            sensor_range: 150.0,
            control_rate: 100.0,
            latency,
            limits: Limits::default(),
            seed: 9,
            randomization: None,
        }
    }

    #[test]
    fn zero_command_stays_at_rest() {
        let mut w = World::new(&scenario(0.0, 0.0));
        for _ in 0..100 {
            w.step(Vec3::zeros());
        }
        assert_eq!(w.uav.position, Vec3::zeros());
        assert_eq!(w.uav.velocity, Vec3::zeros());
    }

    #[test]
    fn constant_command_integrates_like_double_integrator() {
        // limits inactive: jerk bound far above the command step
        let mut s = scenario(0.0, 0.0);
        s.limits.j_max = 1e6;
        let mut w = World::new(&s);
        for _ in 0..100 {
            w.step(Vec3::new(1.0, 0.0, 0.0));
        }
        assert_relative_eq!(w.uav.velocity.x, 1.0, epsilon = 1e-9);
        // semi-implicit Euler lands within one step of the analytic 0.5 m
        assert_relative_eq!(w.uav.position.x, 0.5, epsilon = 0.01);
    }

    #[test]
    fn jerk_limit_slews_in_exactly_point_two_seconds() {
        let mut w = World::new(&scenario(0.0, 0.0));
        let mut reached_at = None;
        for k in 1..=40 {
            w.step(Vec3::new(6.0, 0.0, 0.0));
            if reached_at.is_none() && (w.uav.acceleration.x - 6.0).abs() < 1e-12 {
                reached_at = Some(k);
            }
        }
        // 6 / 30 = 0.2 s = 20 steps at 100 Hz
        assert_eq!(reached_at, Some(20));
    }

    #[test]
    fn latency_delays_first_effect() {
        let mut w = World::new(&scenario(0.02, 0.0));
        assert_eq!(w.latency.depth(), 2);
        w.step(Vec3::new(6.0, 0.0, 0.0)); // applied: zero-fill
        assert_eq!(w.uav.acceleration, Vec3::zeros());
        w.step(Vec3::zeros()); // applied: zero-fill
        assert_eq!(w.uav.acceleration, Vec3::zeros());
        w.step(Vec3::zeros()); // applied: the step-0 command
        assert!(w.uav.acceleration.x > 0.0);
    }

    #[test]
    fn physical_limits_hold_under_wild_commands() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut w = World::new(&scenario(0.01, 0.0));
        let mut prev_acc = w.uav.acceleration;
        for _ in 0..500 {
            let cmd = Vec3::new(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
            );
            w.step(cmd);
            assert!(w.uav.acceleration.amax() <= 6.0 + 1e-12);
            for k in 0..3 {
                let rate = (w.uav.acceleration[k] - prev_acc[k]).abs() / w.dt();
                assert!(rate <= 30.0 + 1e-9, "jerk {rate}");
            }
            assert!(w.uav.velocity.norm() <= 10.0 + 1e-9);
            prev_acc = w.uav.acceleration;
        }
    }

    #[test]
    fn exact_measurement_without_noise() {
        let mut w = World::new(&scenario(0.0, 0.0));
        let m = w.measure();
        assert_eq!(m[0].unwrap(), Vec3::new(50.0, 0.0, 0.0));
    }

    #[test]
    fn measurement_noise_magnitude() {
        let mut w = World::new(&scenario(0.0, 0.1));
        let n = 10_000;
        let mut sum = Vec3::zeros();
        let mut sum_sq = Vec3::zeros();
        for _ in 0..n {
            let z = w.measure()[0].unwrap() - w.obstacles[0].position;
            sum += z;
            sum_sq += z.component_mul(&z);
        }
        for k in 0..3 {
            let mean = sum[k] / n as f64;
            let std = (sum_sq[k] / n as f64 - mean * mean).sqrt();
            assert!((std - 0.1).abs() < 0.005, "axis {k}: std {std}");
        }
    }

    #[test]
    fn seeded_measurements_reproduce() {
        let s = scenario(0.0, 0.25);
        let mut w1 = World::new(&s);
        let mut w2 = World::new(&s);
        for _ in 0..50 {
            assert_eq!(w1.measure(), w2.measure());
            w1.step(Vec3::zeros());
            w2.step(Vec3::zeros());
        }
    }

    #[test]
    fn out_of_range_obstacle_is_invisible() {
        let mut s = scenario(0.0, 0.0);
        s.obstacles[0].start = Vec3::new(200.0, 0.0, 0.0);
        let mut w = World::new(&s);
        assert_eq!(w.measure()[0], None);
    }
}
