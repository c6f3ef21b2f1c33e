//! Atomic artifact writes, the JSON envelope and the metadata sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> std::io::Result<OutDir> {
        fs::create_dir_all(root)?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    #[cfg(test)]
    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes via a temporary file in the same directory followed by a rename.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let target = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> singlab::Result<()>) -> std::io::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write(name, &buf)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Success,
    NonexistenceDetected,
    NonConvergence,
    ConfigError,
    Error,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Error => 1,
            RunStatus::NonexistenceDetected => 2,
            RunStatus::NonConvergence => 3,
            RunStatus::ConfigError => 4,
        }
    }
}

/// `{subcommand, config_hash, results, status}` with stable key order.
pub fn envelope(subcommand: &str, config_hash: &str, results: Value, status: RunStatus) -> String {
    let v = json!({
        "subcommand": subcommand,
        "config_hash": config_hash,
        "results": results,
        "status": status,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("json value");
    s.push('\n');
    s
}

/// Timestamps and runtimes live here so the main artifacts stay byte-stable.
pub fn metadata(subcommand: &str, runtime_secs: f64, extra: Value) -> String {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let v = json!({
        "subcommand": subcommand,
        "unix_time": now,
        "runtime_secs": runtime_secs,
        "version": env!("CARGO_PKG_VERSION"),
        "extra": extra,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("json value");
    s.push('\n');
    s
}
