use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::UsageError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: &'static str,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

/// Collects outputs of one command and writes them together with a manifest.
pub struct Run {
    command: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str, inputs: &[&Path]) -> Self {
        Self {
            command,
            started: Instant::now(),
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            outputs: Vec::new(),
        }
    }

    /// Writes one output file, refusing to overwrite any input.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        for input in &self.inputs {
            if same_file(input, path) {
                return Err(UsageError(format!(
                    "output {} would overwrite input {}",
                    path.display(),
                    input.display()
                ))
                .into());
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating directory {}", dir.display()))?;
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    /// Writes `<primary>.manifest.json` next to the first output.
    pub fn finish(
        self,
        config: serde_json::Value,
        seed: Option<u64>,
        summary: Option<serde_json::Value>,
    ) -> Result<PathBuf> {
        let primary = self.outputs.first().cloned().unwrap_or_default();
        let manifest_path = sibling(&primary, "manifest.json");
        let manifest = RunManifest {
            command: self.command.to_string(),
            config,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            summary,
        };
        let bytes = serde_json::to_vec_pretty(&manifest)?;
        fs::write(&manifest_path, bytes)
            .with_context(|| format!("writing {}", manifest_path.display()))?;
        Ok(manifest_path)
    }
}

/// `roc.csv` + `auc.json` -> `roc.auc.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())).into())
}

/// Minimal CSV writer; fields here never contain separators or quotes.
#[derive(Default)]
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn with_header(columns: &[&str]) -> Self {
        let mut c = Self::default();
        c.row(columns.iter().map(|s| s.to_string()));
        c
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let fields: Vec<String> = fields.into_iter().collect();
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}
