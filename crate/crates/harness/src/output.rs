//! File formats.
//!
//! * Energy traces: CSV `step,time,energy,fp_iters,convolutions`. The
//!   initial state is row 0 when its energy was recorded; an empty energy
//!   cell means energy was not recorded.
//! * Snapshots: raw little-endian `f64` in row-major node order (`.bin`)
//!   with a JSON manifest beside it (`.json`).
//! * Error tables: CSV `tau,error,order`, with an empty order on the
//!   coarsest row.
//!
//! Floats are written in Rust's shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nlac::stepper::EnergyTrace;
use nlac::{Field64, Grid64};
use serde::{Deserialize, Serialize};

use crate::config::{GridSection, KernelSection, PotentialSection, SchemeSection};
use crate::error::{io_error, HarnessError, Result};

pub const TRACE_HEADER: &str = "step,time,energy,fp_iters,convolutions";
pub const ERROR_HEADER: &str = "tau,error,order";

pub fn trace_csv(trace: &EnergyTrace<f64>) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    if let Some(e0) = trace.initial_energy {
        let _ = writeln!(s, "0,0,{e0},0,0");
    }
    for r in &trace.records {
        let energy = r.energy.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", r.k, r.time, energy, r.fp_iters, r.convolutions);
    }
    s
}

/// One row of an error table; `order` is `log2(e_{k-1} / e_k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub tau: f64,
    pub error: f64,
    pub order: Option<f64>,
}

pub fn error_csv(rows: &[ErrorRow]) -> String {
    let mut s = String::from(ERROR_HEADER);
    s.push('\n');
    for r in rows {
        let order = r.order.map(|o| o.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", r.tau, r.error, order);
    }
    s
}

/// Snapshot metadata written next to the binary data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub file: String,
    /// Which field the file holds, e.g. `u` or `theta`.
    pub field: String,
    pub format: String,
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
    pub step: usize,
    pub time: f64,
    pub requested_time: Option<f64>,
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub potential: PotentialSection,
    pub scheme: SchemeSection,
    pub seed: Option<u64>,
    pub created: Created,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub generator: String,
    pub version: String,
    pub unix_seconds: u64,
}

impl Created {
    pub fn now() -> Self {
        Self {
            generator: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

pub const SNAPSHOT_FORMAT: &str = "f64-le-row-major";

pub fn snapshot_bytes(field: &Field64) -> Vec<u8> {
    field.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_error(path))
}

/// Writes `<dir>/<stem>.bin` and `<dir>/<stem>.json`; returns the data path.
pub fn write_snapshot(dir: &Path, stem: &str, field: &Field64, manifest: &SnapshotManifest) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let bin = dir.join(format!("{stem}.bin"));
    fs::write(&bin, snapshot_bytes(field)).map_err(io_error(&bin))?;
    let json = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_text(&json, &text)?;
    Ok(bin)
}

/// Reads a snapshot written by [`write_snapshot`] back onto `grid`.
pub fn read_snapshot(path: &Path, grid: &Grid64) -> Result<Field64> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    if bytes.len() != 8 * grid.len() {
        return Err(HarnessError::Config(format!(
            "{}: {} bytes, expected {} for {} nodes",
            path.display(),
            bytes.len(),
            8 * grid.len(),
            grid.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Field64::from_vec(grid, data)?)
}

pub fn read_manifest(path: &Path) -> Result<SnapshotManifest> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
