//! Per-episode metrics and batch aggregation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailReason {
    Collision,
    Timeout,
}

/// Record of one episode.
///
/// Sim-time quantities (t_r, t_a, t_d, d_s, v_cl) are deterministic under the
/// episode seed; t_cm and t_cp are wall-clock measurements. Optional fields
/// are absent when the episode never triggered (or, for d_s, when the
/// scenario had no obstacles — the separation is unbounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub success: bool,
    pub fail_reason: Option<FailReason>,
    /// True closing speed of the threatening obstacle at the trigger (m/s).
    pub v_cl_at_trigger: Option<f64>,
    /// Trigger to first detectable avoid action, sim time (ms).
    pub t_r_ms: Option<f64>,
    /// Trigger evaluation to safe command ready, wall clock (ms).
    pub t_cm_ms: Option<f64>,
    /// Mean per-step pipeline wall time (ms).
    pub t_cp_ms: f64,
    /// Minimum true center separation over the episode (m).
    pub d_s_m: Option<f64>,
    /// Trigger to end of hovering, sim time (ms).
    pub t_a_ms: Option<f64>,
    /// First detection of the threatening obstacle to the trigger, sim time (ms).
    pub t_d_ms: Option<f64>,
    /// Steps whose final constraint violation exceeded the feasibility
    /// tolerance (conflicting geometry or exhausted budget).
    pub infeasibility_events: u32,
}

/// Mean and standard deviation over the episodes where a field was present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FieldStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl FieldStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            mean,
            std: var.sqrt(),
            n,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_runs: usize,
    /// 100 · successes / runs.
    pub success_rate_pct: f64,
    pub v_cl_at_trigger: FieldStats,
    pub t_r_ms: FieldStats,
    pub t_cm_ms: FieldStats,
    pub t_cp_ms: FieldStats,
    pub d_s_m: FieldStats,
    pub t_a_ms: FieldStats,
    pub t_d_ms: FieldStats,
    pub infeasibility_events: FieldStats,
    /// SHA-256 over the generating configuration.
    pub config_fingerprint: String,
    pub seed_base: u64,
}

impl BatchSummary {
    pub fn aggregate(metrics: &[RunMetrics], config_fingerprint: String, seed_base: u64) -> Self {
        let opt = |f: fn(&RunMetrics) -> Option<f64>| {
            FieldStats::from_values(&metrics.iter().filter_map(f).collect::<Vec<_>>())
        };
        let successes = metrics.iter().filter(|m| m.success).count();
        Self {
            n_runs: metrics.len(),
            success_rate_pct: if metrics.is_empty() {
                0.0
            } else {
                100.0 * successes as f64 / metrics.len() as f64
            },
            v_cl_at_trigger: opt(|m| m.v_cl_at_trigger),
            t_r_ms: opt(|m| m.t_r_ms),
            t_cm_ms: opt(|m| m.t_cm_ms),
            t_cp_ms: FieldStats::from_values(
                &metrics.iter().map(|m| m.t_cp_ms).collect::<Vec<_>>(),
            ),
            d_s_m: opt(|m| m.d_s_m),
            t_a_ms: opt(|m| m.t_a_ms),
            t_d_ms: opt(|m| m.t_d_ms),
            infeasibility_events: FieldStats::from_values(
                &metrics
                    .iter()
                    .map(|m| m.infeasibility_events as f64)
                    .collect::<Vec<_>>(),
            ),
            config_fingerprint,
            seed_base,
        }
    }
}
