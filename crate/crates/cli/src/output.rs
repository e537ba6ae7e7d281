//! Text formats, staged file writes and run manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

/// 17 significant digits; `nan`, `inf`, `-inf` for non-finite values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Comma-separated table with a header row and LF line endings.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: &[f64]) {
        debug_assert_eq!(cells.len(), self.columns);
        let cells: Vec<String> = cells.iter().map(|&x| num(x)).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Whitespace-delimited heatmap: first row `nan γ_0 γ_1 ...`, then one row
/// `L_i P_i0 P_i1 ...` per length.
pub fn matrix(lengths: &[f64], gammas: &[f64], values: &[f64]) -> String {
    let mut out = String::new();
    let head: Vec<String> = std::iter::once(f64::NAN).chain(gammas.iter().copied()).map(num).collect();
    out.push_str(&head.join(" "));
    out.push('\n');
    for (li, &l) in lengths.iter().enumerate() {
        let row = &values[li * gammas.len()..(li + 1) * gammas.len()];
        let cells: Vec<String> = std::iter::once(l).chain(row.iter().copied()).map(num).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Output files written to temporaries first and moved into place together,
/// so a failing command leaves none of them behind.
#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, NamedTempFile)>,
}

impl Staged {
    pub fn add(&mut self, path: &Path, contents: &[u8]) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("staging {}", path.display()))?;
        tmp.write_all(contents)?;
        tmp.flush()?;
        self.files.push((path.to_path_buf(), tmp));
        Ok(())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::with_capacity(self.files.len());
        for (path, tmp) in self.files {
            tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
            done.push(path);
        }
        Ok(done)
    }
}

/// Record of one run: enough to repeat it and to find what it wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Resolved settings; passing this file back with `--config` repeats
    /// the run.
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrator: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: &BTreeMap<String, String>, source: Option<&Path>, started: Instant) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config: config.clone(),
            inputs: source.map(|p| p.display().to_string()).into_iter().collect(),
            outputs: Vec::new(),
            wall_seconds: started.elapsed().as_secs_f64(),
            integrator: None,
        }
    }

    /// Stage the manifest itself; it lists every other staged output.
    pub fn write(mut self, path: &Path, staged: Staged, committed_outputs: &[PathBuf]) -> Result<()> {
        self.outputs = committed_outputs
            .iter()
            .chain(staged.files.iter().map(|(p, _)| p))
            .chain(std::iter::once(&path.to_path_buf()))
            .map(|p| p.display().to_string())
            .collect();
        let mut staged = staged;
        let text = serde_json::to_string_pretty(&self)? + "\n";
        staged.add(path, text.as_bytes())?;
        staged.commit()?;
        Ok(())
    }
}
