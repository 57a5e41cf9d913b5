//! Result export: episode CSV, JSON-lines mirror, and the summary file.
//!
//! Column order is stable; optional metrics serialize as empty cells. The
//! wall-clock columns (`t_cm_ms`, `t_cp_ms`) are the only fields that vary
//! between reruns of an identical configuration.

use crate::harness::batch::{BatchResult, EpisodeRecord};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("export I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV serialization failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Wall-clock column names, excluded from determinism comparisons.
pub const TIMING_COLUMNS: [&str; 2] = ["t_cm_ms", "t_cp_ms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    JsonLines,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" => Ok(ExportFormat::JsonLines),
            other => Err(format!("unknown format {other:?} (expected csv or jsonl)")),
        }
    }
}

pub fn write_episodes_csv(path: &Path, episodes: &[EpisodeRecord]) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_path(path)?;
    for e in episodes {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRecord>, ExportError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_episodes_jsonl(path: &Path, episodes: &[EpisodeRecord]) -> Result<(), ExportError> {
    let mut f = std::fs::File::create(path)?;
    for e in episodes {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_summary_json(
    path: &Path,
    summary: &impl serde::Serialize,
) -> Result<(), ExportError> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Write `episodes.{csv|jsonl}` and `summary.json` into `dir`.
pub fn export_batch(
    dir: &Path,
    result: &BatchResult,
    format: ExportFormat,
) -> Result<(), ExportError> {
    std::fs::create_dir_all(dir)?;
    match format {
        ExportFormat::Csv => write_episodes_csv(&dir.join("episodes.csv"), &result.episodes)?,
        ExportFormat::JsonLines => {
            write_episodes_jsonl(&dir.join("episodes.jsonl"), &result.episodes)?
        }
    }
    write_summary_json(&dir.join("summary.json"), &result.summary)?;
    Ok(())
}

/// Drop the wall-clock columns from exported CSV text, for byte comparison of
/// reruns.
pub fn strip_timing_columns(csv_text: &str) -> String {
    let mut lines = csv_text.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let names: Vec<&str> = header.split(',').collect();
    let keep: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| !TIMING_COLUMNS.contains(n))
        .map(|(i, _)| i)
        .collect();
    let filter_line = |line: &str| {
        let fields: Vec<&str> = line.split(',').collect();
        keep.iter()
            .map(|&i| fields.get(i).copied().unwrap_or(""))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = filter_line(header);
    for line in lines {
        out.push('\n');
        out.push_str(&filter_line(line));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::{FailReason, RunMetrics};

    fn record(i: usize) -> EpisodeRecord {
        EpisodeRecord::new(
            i,
            100 + i as u64,
            crate::pipeline::FilterChoice::DrAcbf,
            RunMetrics {
                success: i % 2 == 0,
                fail_reason: if i % 2 == 0 {
                    None
                } else {
                    Some(FailReason::Timeout)
                },
                v_cl_at_trigger: Some(7.25 + i as f64),
                t_r_ms: Some(31.0),
                t_cm_ms: Some(0.0021 * i as f64),
                t_cp_ms: 0.05,
                d_s_m: if i == 2 { None } else { Some(1.875) },
                t_a_ms: None,
                t_d_ms: Some(1530.0),
                infeasibility_events: i as u32,
            },
        )
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.csv");
        let episodes: Vec<_> = (0..3).map(record).collect();
        write_episodes_csv(&path, &episodes).unwrap();
        let back = read_episodes_csv(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in episodes.iter().zip(&back) {
            assert_eq!(a, b);
            assert_eq!(a.metrics(), b.metrics());
        }
        // the unbounded-separation sentinel serializes as an empty cell
        let text = std::fs::read_to_string(&path).unwrap();
        let row2: Vec<&str> = text.lines().nth(3).unwrap().split(',').collect();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        let d_s_idx = header.iter().position(|h| *h == "d_s_m").unwrap();
        assert_eq!(row2[d_s_idx], "");
    }

    #[test]
    fn timing_columns_are_stripped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.csv");
        write_episodes_csv(&path, &(0..2).map(record).collect::<Vec<_>>()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let stripped = strip_timing_columns(&text);
        assert!(!stripped.contains("t_cm_ms"));
        assert!(!stripped.contains("t_cp_ms"));
        assert!(stripped.contains("t_r_ms"));
        assert!(stripped.contains("d_s_m"));
    }
}
