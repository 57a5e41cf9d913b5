//! Seeded batch runner, sensitivity sweeps, and the trigger ablation.

use crate::harness::episode::run_episode;
use crate::harness::metrics::{BatchSummary, RunMetrics};
use crate::pipeline::{FilterChoice, FilterConfig};
use crate::sim::mission::MissionConfig;
use crate::sim::scenario::Scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Salt separating the scenario-randomization stream from the world stream.
const RANDOMIZATION_SALT: u64 = 0x5EED_0F27_319A_C001;

/// Full run configuration as loaded from `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub mission: MissionConfig,
    /// Success-rate floor (%) asserted by sweep gates.
    #[serde(default = "default_success_floor")]
    pub success_floor_pct: f64,
}

fn default_success_floor() -> f64 {
    60.0
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<std::path::Path>) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.scenario.validate()?;
        Ok(cfg)
    }

    /// SHA-256 fingerprint over the canonical serialized configuration and
    /// filter choice; identical fingerprint + seeds means identical outputs.
    pub fn fingerprint(&self, choice: FilterChoice) -> String {
        let blob = serde_json::to_string(&(self, choice.as_str()))
            .expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(blob.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Flat per-episode row as exported; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub filter: String,
    pub success: bool,
    pub fail_reason: Option<crate::harness::metrics::FailReason>,
    pub v_cl_at_trigger: Option<f64>,
    pub t_r_ms: Option<f64>,
    pub t_cm_ms: Option<f64>,
    pub t_cp_ms: f64,
    pub d_s_m: Option<f64>,
    pub t_a_ms: Option<f64>,
    pub t_d_ms: Option<f64>,
    pub infeasibility_events: u32,
}

impl EpisodeRecord {
    pub fn new(episode: usize, seed: u64, choice: FilterChoice, m: RunMetrics) -> Self {
        Self {
            episode,
            seed,
            filter: choice.as_str().to_string(),
            success: m.success,
            fail_reason: m.fail_reason,
            v_cl_at_trigger: m.v_cl_at_trigger,
            t_r_ms: m.t_r_ms,
            t_cm_ms: m.t_cm_ms,
            t_cp_ms: m.t_cp_ms,
            d_s_m: m.d_s_m,
            t_a_ms: m.t_a_ms,
            t_d_ms: m.t_d_ms,
            infeasibility_events: m.infeasibility_events,
        }
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            success: self.success,
            fail_reason: self.fail_reason,
            v_cl_at_trigger: self.v_cl_at_trigger,
            t_r_ms: self.t_r_ms,
            t_cm_ms: self.t_cm_ms,
            t_cp_ms: self.t_cp_ms,
            d_s_m: self.d_s_m,
            t_a_ms: self.t_a_ms,
            t_d_ms: self.t_d_ms,
            infeasibility_events: self.infeasibility_events,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchResult {
    pub episodes: Vec<EpisodeRecord>,
    pub summary: BatchSummary,
}

/// Scenario for episode `seed`: the template's randomization applied with a
/// generator derived from the seed, and the world seeded by it.
pub fn episode_scenario(template: &Scenario, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ RANDOMIZATION_SALT);
    let mut s = template.randomized(&mut rng);
    s.seed = seed;
    s
}

/// Run `n_runs` episodes with seeds `seed_base..seed_base + n_runs`, in
/// parallel, collected in seed order so the output is independent of the
/// worker count.
pub fn run_batch(cfg: &RunConfig, choice: FilterChoice, seed_base: u64, n_runs: usize) -> BatchResult {
    let metrics: Vec<RunMetrics> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = seed_base + i as u64;
            let scenario = episode_scenario(&cfg.scenario, seed);
            run_episode(&scenario, &cfg.filter, &cfg.mission, choice, None)
        })
        .collect();
    let episodes = metrics
        .into_iter()
        .enumerate()
        .map(|(i, m)| EpisodeRecord::new(i, seed_base + i as u64, choice, m))
        .collect::<Vec<_>>();
    let summary = BatchSummary::aggregate(
        &episodes.iter().map(|e| e.metrics()).collect::<Vec<_>>(),
        cfg.fingerprint(choice),
        seed_base,
    );
    BatchResult { episodes, summary }
}

/// Parameter axes of the sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    HMax,
    DCl,
    THd,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h-max" | "h_max" => Ok(SweepParam::HMax),
            "d-cl" | "d_cl" => Ok(SweepParam::DCl),
            "t-hd" | "t_hd" => Ok(SweepParam::THd),
            other => Err(format!(
                "unknown sweep parameter {other:?} (expected h-max, d-cl, or t-hd)"
            )),
        }
    }
}

/// Apply one sweep value, keeping everything else fixed. Changing the horizon
/// also re-ties the prediction window to it.
pub fn apply_sweep_value(cfg: &RunConfig, param: SweepParam, value: f64) -> RunConfig {
    let mut out = cfg.clone();
    match param {
        SweepParam::HMax => {
            out.filter.horizon.h_max = value;
            out.filter.horizon.h_min = out.filter.horizon.h_min.min(value * 0.75);
            out.filter.tie_prediction_window();
        }
        SweepParam::DCl => out.mission.d_cl = value,
        SweepParam::THd => out.mission.t_hd = value,
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub summary: BatchSummary,
}

/// One batch per value, all else held fixed.
pub fn sensitivity_sweep(
    cfg: &RunConfig,
    choice: FilterChoice,
    param: SweepParam,
    values: &[f64],
    seed_base: u64,
    n_runs: usize,
) -> Vec<SweepRow> {
    values
        .iter()
        .map(|&value| {
            let swept = apply_sweep_value(cfg, param, value);
            SweepRow {
                param,
                value,
                summary: run_batch(&swept, choice, seed_base, n_runs).summary,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationResult {
    pub with_cvar: BatchSummary,
    pub without_cvar: BatchSummary,
    /// Success-rate gap in percentage points (with − without).
    pub gap_pp: f64,
}

/// Monte Carlo trigger on vs the single-time Gaussian fallback, identical
/// scenario, seeds, and parameters.
pub fn ablation(cfg: &RunConfig, seed_base: u64, n_runs: usize) -> AblationResult {
    let with_cvar = run_batch(cfg, FilterChoice::DrAcbf, seed_base, n_runs).summary;
    let without_cvar = run_batch(cfg, FilterChoice::NoCvar, seed_base, n_runs).summary;
    let gap_pp = with_cvar.success_rate_pct - without_cvar.success_rate_pct;
    AblationResult {
        with_cvar,
        without_cvar,
        gap_pp,
    }
}
