//! Batch Monte Carlo harness: seeded episodes, metrics, sweeps, ablation,
//! result export, and the projection-oracle verification suite.

pub mod batch;
pub mod episode;
pub mod export;
pub mod metrics;
pub mod oracle;

pub use batch::{
    ablation, apply_sweep_value, episode_scenario, run_batch, sensitivity_sweep, AblationResult,
    BatchResult, EpisodeRecord, RunConfig, SweepParam, SweepRow,
};
pub use episode::{run_episode, TraceRow, GOAL_TOL, TIMEOUT_S};
pub use export::{export_batch, read_episodes_csv, strip_timing_columns, ExportFormat};
pub use metrics::{BatchSummary, FailReason, FieldStats, RunMetrics};
