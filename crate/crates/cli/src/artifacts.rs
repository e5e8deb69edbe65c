//! Staged artifact output with a hashed manifest.
//!
//! Files are written under `<out>/.partial` and moved into `<out>` only when
//! the run succeeds; a failed or dropped run removes the staging directory.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

const STAGING: &str = ".partial";
pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.json";

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub config_hash: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub seed: u64,
    pub config_hash: &'a str,
    pub config: &'a serde_json::Value,
    pub artifacts: &'a [ArtifactEntry],
    /// Unresolved fraction per artifact that has one.
    pub unresolved: &'a BTreeMap<String, f64>,
    /// Wall-clock lives in a separate file so the manifest is reproducible.
    pub timing: &'static str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest round-trip representation, exponent form.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

pub fn coords_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

pub struct Artifacts {
    out: PathBuf,
    staging: PathBuf,
    created_out: bool,
    config_hash: String,
    entries: Vec<ArtifactEntry>,
    unresolved: BTreeMap<String, f64>,
    timing: BTreeMap<String, f64>,
    committed: bool,
}

impl Artifacts {
    pub fn open(out: &Path, config_hash: &str) -> io::Result<Self> {
        let created_out = !out.exists();
        fs::create_dir_all(out)?;
        let staging = out.join(STAGING);
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        Ok(Artifacts {
            out: out.to_path_buf(),
            staging,
            created_out,
            config_hash: config_hash.to_string(),
            entries: Vec::new(),
            unresolved: BTreeMap::new(),
            timing: BTreeMap::new(),
            committed: false,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.staging.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.entries.push(ArtifactEntry { file: name.to_string(), sha256: sha256_hex(bytes), config_hash: self.config_hash.clone() });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[String], rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut s = header.join(",");
        s.push('\n');
        for row in rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn note_unresolved(&mut self, name: &str, fraction: f64) {
        self.unresolved.insert(name.to_string(), fraction);
    }

    pub fn unresolved(&self) -> &BTreeMap<String, f64> {
        &self.unresolved
    }

    pub fn note_time(&mut self, label: &str, seconds: f64) {
        self.timing.insert(label.to_string(), seconds);
    }

    /// Write the manifest and timing file, then move everything into place.
    pub fn commit(mut self, subcommand: &str, seed: u64, config: &serde_json::Value, wall_clock: f64) -> io::Result<Vec<ArtifactEntry>> {
        let entries = std::mem::take(&mut self.entries);
        let manifest = Manifest {
            tool: "regdist",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            config_hash: &self.config_hash,
            config,
            artifacts: &entries,
            unresolved: &self.unresolved,
            timing: TIMING,
        };
        let mut m = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        m.push('\n');
        fs::write(self.staging.join(MANIFEST), m)?;
        self.timing.insert("wall_clock_s".into(), wall_clock);
        let mut t = serde_json::to_string_pretty(&self.timing).map_err(io::Error::other)?;
        t.push('\n');
        fs::write(self.staging.join(TIMING), t)?;
        let names: Vec<String> = entries.iter().map(|e| e.file.clone()).chain([MANIFEST.to_string(), TIMING.to_string()]).collect();
        for name in &names {
            let dst = self.out.join(name);
            if let Some(parent) = dst.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::rename(self.staging.join(name), dst)?;
        }
        fs::remove_dir_all(&self.staging)?;
        self.committed = true;
        Ok(entries)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        let _ = fs::remove_dir_all(&self.staging);
        if self.created_out {
            // only removes the directory if nothing else landed there
            let _ = fs::remove_dir(&self.out);
        }
    }
}
