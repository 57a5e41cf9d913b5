//! Batch CLI around the safety-filter library.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dracbf::harness::{
    ablation, episode_scenario, export_batch, run_batch, run_episode, sensitivity_sweep,
    ExportFormat, RunConfig, SweepParam,
};
use dracbf::pipeline::FilterChoice;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "dracbf",
    about = "Acceleration-space UAV obstacle-avoidance filter: episodes, batches, sweeps, ablation, and solver verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Run configuration (JSON: scenario, filter, mission sections).
    #[arg(long)]
    config: PathBuf,
    /// Seed range as base:count.
    #[arg(long, default_value = "1000:100")]
    seeds: String,
    /// Safety filter variant.
    #[arg(long, default_value = "dr-acbf")]
    filter: String,
    /// Output directory for episode and summary files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Episode file format.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Worker threads for the episode pool (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single episode and print a per-step trace summary.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a seeded batch and export metrics.
    Batch {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sensitivity sweep over one parameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter to sweep: h-max, d-cl, or t-hd.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Trigger ablation: Monte Carlo early warning vs the single-time
    /// Gaussian fallback on identical seeds.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Verify the fixed-budget projection against the exact QP, and the QP
    /// against a dense grid.
    OracleCheck {
        /// Random instances for the projection-vs-QP comparison.
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        /// Instances for the QP-vs-grid comparison.
        #[arg(long, default_value_t = 100)]
        grid_instances: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Write the reports as JSON into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> anyhow::Result<(u64, usize)> {
    let (base, count) = s
        .split_once(':')
        .with_context(|| format!("--seeds expects base:count, got {s:?}"))?;
    Ok((base.parse()?, count.parse()?))
}

fn setup_workers(workers: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("worker pool already configured")?;
    }
    Ok(())
}

fn print_summary(label: &str, s: &dracbf::harness::BatchSummary) {
    println!(
        "{label}: n={} success {:.1}%  v_cl {:.2} m/s  t_r {:.1} ms  t_cm {:.3} ms  t_cp {:.3} ms  d_s {:.3} m  infeasible {:.2}/run",
        s.n_runs,
        s.success_rate_pct,
        s.v_cl_at_trigger.mean,
        s.t_r_ms.mean,
        s.t_cm_ms.mean,
        s.t_cp_ms.mean,
        s.d_s_m.mean,
        s.infeasibility_events.mean,
    );
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common } => {
            setup_workers(common.workers)?;
            let cfg = RunConfig::from_file(&common.config)?;
            let choice = FilterChoice::from_str(&common.filter).map_err(anyhow::Error::msg)?;
            let (seed_base, _) = parse_seeds(&common.seeds)?;
            let scenario = episode_scenario(&cfg.scenario, seed_base);
            let mut trace = Vec::new();
            let metrics = run_episode(&scenario, &cfg.filter, &cfg.mission, choice, Some(&mut trace));
            let mut last_phase = None;
            for row in &trace {
                if last_phase != Some(row.phase) {
                    println!(
                        "t={:7.3} s  phase {:?}  separation {:.3} m  speed {:.2} m/s",
                        row.time_s, row.phase, row.min_separation_m, row.speed_mps
                    );
                    last_phase = Some(row.phase);
                }
            }
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            if let Some(dir) = common.out {
                std::fs::create_dir_all(&dir)?;
                let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
                for row in &trace {
                    w.serialize(row)?;
                }
                w.flush()?;
                println!("trace written to {}", dir.join("trace.csv").display());
            }
        }
        Command::Batch { common } => {
            setup_workers(common.workers)?;
            let cfg = RunConfig::from_file(&common.config)?;
            let choice = FilterChoice::from_str(&common.filter).map_err(anyhow::Error::msg)?;
            let format = ExportFormat::from_str(&common.format).map_err(anyhow::Error::msg)?;
            let (seed_base, count) = parse_seeds(&common.seeds)?;
            let result = run_batch(&cfg, choice, seed_base, count);
            print_summary(choice.as_str(), &result.summary);
            if let Some(dir) = common.out {
                export_batch(&dir, &result, format)?;
                println!("episodes and summary written to {}", dir.display());
            }
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            setup_workers(common.workers)?;
            let cfg = RunConfig::from_file(&common.config)?;
            let choice = FilterChoice::from_str(&common.filter).map_err(anyhow::Error::msg)?;
            let param = SweepParam::from_str(&param).map_err(anyhow::Error::msg)?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .context("--values expects comma-separated numbers")?;
            if values.is_empty() {
                bail!("--values is empty");
            }
            let (seed_base, count) = parse_seeds(&common.seeds)?;
            let rows = sensitivity_sweep(&cfg, choice, param, &values, seed_base, count);
            for row in &rows {
                print_summary(&format!("{:?}={}", row.param, row.value), &row.summary);
            }
            if let Some(dir) = common.out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join("sweep.json"),
                    serde_json::to_string_pretty(&rows)?,
                )?;
                println!("sweep table written to {}", dir.join("sweep.json").display());
            }
        }
        Command::Ablate { common } => {
            setup_workers(common.workers)?;
            let cfg = RunConfig::from_file(&common.config)?;
            let (seed_base, count) = parse_seeds(&common.seeds)?;
            let result = ablation(&cfg, seed_base, count);
            print_summary("early warning ON ", &result.with_cvar);
            print_summary("early warning OFF", &result.without_cvar);
            println!("success-rate gap: {:+.1} percentage points", result.gap_pp);
            if let Some(dir) = common.out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join("ablation.json"),
                    serde_json::to_string_pretty(&result)?,
                )?;
                println!("ablation written to {}", dir.join("ablation.json").display());
            }
        }
        Command::OracleCheck {
            instances,
            grid_instances,
            seed,
            out,
        } => {
            use dracbf::harness::oracle::{gs_vs_qp, qp_vs_grid, InstanceParams};
            use dracbf::projection::ProjectionConfig;
            let params = InstanceParams::default();
            let gs = gs_vs_qp(instances, seed, &ProjectionConfig::default(), &params);
            println!(
                "projection vs QP on {} instances: max violation {:.3e} (bound {:.0e}), max distance {:.4} (bound {:.2}) → {}",
                gs.instances,
                gs.max_final_violation,
                gs.violation_bound,
                gs.max_distance_to_qp,
                gs.distance_bound,
                if gs.pass { "PASS" } else { "FAIL" }
            );
            let grid = qp_vs_grid(grid_instances, seed + 1, 0.01, &params);
            println!(
                "QP vs dense grid on {} instances: objective gap in [{:.3e}, {:.3e}] → {}",
                grid.instances,
                grid.min_gap,
                grid.max_gap,
                if grid.pass { "PASS" } else { "FAIL" }
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join("oracle.json"),
                    serde_json::to_string_pretty(&(&gs, &grid))?,
                )?;
            }
            if !(gs.pass && grid.pass) {
                bail!("oracle check failed");
            }
        }
    }
    Ok(())
}
