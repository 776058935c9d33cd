//! Output files. Everything is rendered in memory, written to a temporary
//! sibling and renamed into place, so readers never see a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use stablab_core::engine::TrajectoryRecord;

/// `prefix` + `suffix`, e.g. `runs/a` + `.stability.csv`.
pub fn output_path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{suffix}"))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Shortest round-trip decimal form; empty for absent values.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes a header row and string records as CSV.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
    write_atomic(path, &bytes)
}

/// Seconds since the Unix epoch; the only non-reproducible field in any output.
pub fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// SHA-256 over the little-endian bytes of a parameter vector.
pub fn theta_digest(theta: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in theta {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub const TRAJECTORY_COLUMNS: [&str; 5] = ["t", "i_t", "alpha", "loss", "grad_norm"];

#[derive(Serialize)]
struct TrajectoryFooter<'a> {
    final_theta_digest: String,
    final_theta: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    swa_theta: Option<&'a [f64]>,
    seed: u64,
    scheme: stablab_core::engine::Scheme,
    steps: usize,
}

/// `<prefix>.trajectory.csv` (one row per step, `i_t` 1-based and empty for
/// full-batch steps) and its JSON footer `<prefix>.trajectory.json`.
pub fn write_trajectory(prefix: &str, rec: &TrajectoryRecord) -> Result<(PathBuf, PathBuf)> {
    let csv_path = output_path(prefix, ".trajectory.csv");
    let rows = rec.entries.iter().map(|e| {
        vec![
            e.t.to_string(),
            e.index.map(|i| (i + 1).to_string()).unwrap_or_default(),
            num(e.alpha),
            num(e.loss),
            num(e.grad_norm),
        ]
    });
    write_csv(&csv_path, &TRAJECTORY_COLUMNS, rows)?;
    let json_path = output_path(prefix, ".trajectory.json");
    write_json(
        &json_path,
        &TrajectoryFooter {
            final_theta_digest: theta_digest(&rec.final_theta),
            final_theta: &rec.final_theta,
            swa_theta: rec.swa_theta.as_deref(),
            seed: rec.seed,
            scheme: rec.scheme,
            steps: rec.entries.len(),
        },
    )?;
    Ok((csv_path, json_path))
}
