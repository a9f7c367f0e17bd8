use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const RUN_SCHEMA: u32 = 1;

/// Instance file a run read, with the digest of its canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRef {
    pub path: PathBuf,
    pub digest: String,
}

/// What was run and how. `argv` omits the output directory so that a
/// replay can redirect it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub argv: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instance: Option<InstanceRef>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// Effective settings after defaults and overrides.
    pub config: serde_json::Value,
    pub tool_version: String,
    pub timestamp_unix: u64,
    pub threads: usize,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            schema: RUN_SCHEMA,
            command: command.to_string(),
            argv: strip_out(argv),
            instance: None,
            seed: None,
            config: serde_json::Value::Null,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            threads: rayon::current_num_threads(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RUN_MANIFEST);
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(m.schema == RUN_SCHEMA, "unsupported run manifest schema {}", m.schema);
        Ok(m)
    }
}

fn strip_out(argv: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--out" || a == "-o" {
            it.next();
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_flag_is_dropped() {
        let argv: Vec<String> = ["solve", "--instance", "a.json", "--out", "x", "--seed", "3", "--out=y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(strip_out(&argv), ["solve", "--instance", "a.json", "--seed", "3"]);
    }
}
