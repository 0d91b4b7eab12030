//! Run persistence: files land in one output directory, every byte written
//! is digested, and the run closes with a `manifest.json` tying the
//! effective config to the emitted files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// One emitted file as the manifest records it.
#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// The reproducibility header of a run: what ran, from which config, what
/// it produced, and the digests to verify it. Everything except
/// `created_unix_seconds` is a pure function of config and seed.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    name: &'a str,
    version: &'a str,
    created_unix_seconds: u64,
    config: &'a serde_json::Value,
    files: &'a [FileRecord],
}

/// Collects files for one run and writes the manifest last.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|err| {
            CliError::Runtime(format!("cannot create output dir {}: {err}", dir.display()))
        })?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    /// Write one file and record its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|err| {
            CliError::Runtime(format!("cannot write {}: {err}", path.display()))
        })?;
        self.files.push(FileRecord {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Serialize `value` as pretty JSON (stable field order, shortest
    /// round-trip floats — byte-identical across same-seed runs).
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|err| CliError::Runtime(format!("cannot serialize {name}: {err}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Close the run: write `manifest.json` describing everything emitted
    /// so far. The manifest carries the only timestamp of the run, keeping
    /// the data files byte-reproducible.
    pub fn finish(self, command: &str, name: &str, config: &serde_json::Value) -> Result<(), CliError> {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = RunManifest {
            command,
            name,
            version: env!("CARGO_PKG_VERSION"),
            created_unix_seconds: created,
            config,
            files: &self.files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|err| CliError::Runtime(format!("cannot serialize manifest: {err}")))?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, &bytes).map_err(|err| {
            CliError::Runtime(format!("cannot write {}: {err}", path.display()))
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Render an optional p-value for CSV: empty field when the entry is a
/// direct-threshold check without one.
pub fn csv_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Plot-ready table of battery entries, one row per test.
pub fn battery_csv(report: &drift_camouflage::battery::BatteryReport) -> String {
    use std::fmt::Write as _;
    let mut csv = String::from("test,statistic,p_value,threshold,pass\n");
    for entry in &report.entries {
        writeln!(
            csv,
            "{},{},{},{},{}",
            entry.name,
            entry.statistic,
            csv_opt(entry.p_value),
            entry.threshold,
            entry.pass
        )
        .expect("writing to a String cannot fail");
    }
    csv
}
