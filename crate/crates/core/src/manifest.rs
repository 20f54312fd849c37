//! Output files and the run manifest that lists them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fixed 17-significant-digit formatting used in every CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub grids: serde_json::Value,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, f64>,
    pub threads: usize,
    pub dry_run: bool,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn new(command: &str, config_source: &str, config: serde_json::Value) -> Self {
        Self {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_source.as_bytes()),
            config,
            grids: serde_json::Value::Null,
            tolerances: BTreeMap::new(),
            checks: BTreeMap::new(),
            threads: rayon::current_num_threads(),
            dry_run: false,
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, value: f64) {
        self.checks.insert(name.to_string(), value);
    }

    pub fn tolerance(&mut self, name: &str, value: f64) {
        self.tolerances.insert(name.to_string(), value);
    }
}

/// Writes files under one directory and records each in the manifest.
pub struct OutputDir {
    root: PathBuf,
    pub manifest: RunManifest,
}

impl OutputDir {
    pub fn new(root: &Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes)?;
        self.manifest.outputs.push(OutputFile {
            path: PathBuf::from(name),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, &text)
    }

    /// CSV with the given header; every value goes through [`fmt_f64`].
    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let bytes = csv_bytes(header, rows.into_iter().map(|r| r.into_iter().map(fmt_f64).collect()))?;
        self.write(name, &bytes)
    }

    /// CSV whose cells are already formatted.
    pub fn write_csv_text<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let bytes = csv_bytes(header, rows)?;
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` last; it is not listed in itself.
    pub fn finish(self, wall_clock_seconds: f64) -> Result<RunManifest> {
        let mut manifest = self.manifest;
        manifest.wall_clock_seconds = wall_clock_seconds;
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        std::fs::write(self.root.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

fn csv_bytes<I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Validation(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Validation(format!("csv encoding failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        let x = std::f64::consts::PI;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn manifest_round_trips_and_lists_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("speed", "a = 1", serde_json::json!({"a": 1}));
        m.check("s0", -1.0);
        let mut out = OutputDir::new(dir.path(), m).unwrap();
        out.write_csv("t.csv", &["x", "y"], vec![vec![1.0, 2.0]]).unwrap();
        let m = out.finish(0.5).unwrap();
        assert_eq!(m.outputs.len(), 1);
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let body = std::fs::read(dir.path().join("t.csv")).unwrap();
        assert_eq!(sha256_hex(&body), m.outputs[0].sha256);
        assert_eq!(String::from_utf8(body).unwrap(), "x,y\n1.0000000000000000e0,2.0000000000000000e0\n");
    }
}
