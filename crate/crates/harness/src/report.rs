//! Run reports and output manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub required: String,
    pub measured: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            required: format!("<= {bound:e}"),
            measured,
            pass: measured <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            required: format!(">= {bound:e}"),
            measured,
            pass: measured >= bound,
        }
    }

    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            required: format!("in [{lo}, {hi}]"),
            measured,
            pass: (lo..=hi).contains(&measured),
        }
    }

    pub fn finite(name: impl Into<String>, measured: f64) -> Self {
        Self {
            name: name.into(),
            required: "finite".into(),
            measured,
            pass: measured.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    pub version: String,
    pub wall_time_s: f64,
    pub checks: Vec<Check>,
    pub manifest: Vec<ManifestEntry>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// SHA-256 of the report with the wall time removed.
    pub fn content_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        value.as_object_mut().expect("object").remove("wall_time_s");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Files written by a run, hashed as they are written.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    manifest: Vec<ManifestEntry>,
}

impl Outputs {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            manifest: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.manifest.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> std::io::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn into_manifest(self) -> Vec<ManifestEntry> {
        self.manifest
    }
}

/// Every manifest entry exists under `dir` with the recorded hash.
pub fn verify_manifest(dir: &Path, manifest: &[ManifestEntry]) -> std::io::Result<bool> {
    for entry in manifest {
        let bytes = fs::read(dir.join(&entry.path))?;
        if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            return Ok(false);
        }
    }
    Ok(true)
}

pub(crate) fn write_report(dir: &Path, report: &RunReport) -> std::io::Result<()> {
    let mut f = fs::File::create(dir.join("report.json"))?;
    f.write_all(report.to_json().as_bytes())?;
    f.write_all(b"\n")
}
