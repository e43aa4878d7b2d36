//! File formats: trajectory and diagnostics CSV, noise dumps, run manifests.
//!
//! CSV schemas (header row first, numbers in shortest round-trip form):
//! - `trajectories.csv`: `path_id,t,x0,...,x{d-1}`, one row per grid time
//!   from `-tau` to `T`, paths in order.
//! - `picard_diagnostics.csv`: `path_id,n,D_n`.
//! - noise dump: `path_id,t,dw0,...` for each step `(t, t + h]` and a
//!   companion `*_jumps.csv` with `path_id,time,atom_index`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::NoisePath;
use crate::solver::{Ensemble, PicardDiagnostics, Trajectory};

pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const PICARD_CSV: &str = "picard_diagnostics.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

pub fn trajectories_csv(ensemble: &Ensemble) -> String {
    let mut out = String::new();
    let d = ensemble.dim();
    out.push_str("path_id,t");
    for i in 0..d {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (p, x) in ensemble.trajectories.iter().enumerate() {
        for r in 0..x.len() {
            let _ = write!(out, "{p},{}", x.time(r));
            for v in &x.values[r * d..(r + 1) * d] {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn picard_csv(ensemble: &Ensemble) -> String {
    let mut out = String::from("path_id,n,D_n\n");
    for (p, diag) in ensemble.diagnostics.iter().enumerate() {
        if let Some(diag) = diag {
            for (k, v) in diag.sup_diffs.iter().enumerate() {
                let _ = writeln!(out, "{p},{},{v}", k + 1);
            }
        }
    }
    out
}

pub fn noise_csv(paths: &[NoisePath]) -> (String, String) {
    let mut inc = String::from("path_id,t");
    if let Some(first) = paths.first() {
        for i in 0..first.dim {
            let _ = write!(inc, ",dw{i}");
        }
    }
    inc.push('\n');
    let mut jumps = String::from("path_id,time,atom_index\n");
    for (p, path) in paths.iter().enumerate() {
        for j in 0..path.n_steps() {
            let _ = write!(inc, "{p},{}", path.grid[j]);
            for v in path.increment(j) {
                let _ = write!(inc, ",{v}");
            }
            inc.push('\n');
        }
        for e in &path.jumps {
            let _ = writeln!(jumps, "{p},{},{}", e.time, e.atom);
        }
    }
    (inc, jumps)
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    }
}

/// Reads `trajectories.csv` back; `history` and `step` come from the manifest.
pub fn read_trajectories(path: &Path, history: usize, step: f64) -> Result<Vec<Trajectory>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "path_id" || cols[1] != "t" {
        return Err(parse_err(path, 1, "expected header `path_id,t,x0,...`"));
    }
    let d = cols.len() - 2;
    let mut out: Vec<Trajectory> = Vec::new();
    let mut current: Option<(usize, Vec<f64>)> = None;
    let finish = |id: usize, values: Vec<f64>, out: &mut Vec<Trajectory>| -> Result<()> {
        let rows = values.len() / d;
        if id != out.len() || rows < history + 2 {
            return Err(parse_err(path, 0, format!("path {id} is incomplete or out of order")));
        }
        out.push(Trajectory {
            step,
            history,
            n_steps: rows - history - 1,
            dim: d,
            values,
            jump_marks: Vec::new(),
            neutral_residual: 0.0,
        });
        Ok(())
    };
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let mut it = line.split(',');
        let id: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, lineno, "bad path_id"))?;
        it.next().ok_or_else(|| parse_err(path, lineno, "missing t"))?;
        let vals: std::result::Result<Vec<f64>, _> = it.map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| parse_err(path, lineno, e))?;
        if vals.len() != d {
            return Err(parse_err(path, lineno, format!("expected {d} components")));
        }
        match &mut current {
            Some((cid, buf)) if *cid == id => buf.extend(vals),
            _ => {
                if let Some((cid, buf)) = current.take() {
                    finish(cid, buf, &mut out)?;
                }
                current = Some((id, vals));
            }
        }
    }
    if let Some((cid, buf)) = current.take() {
        finish(cid, buf, &mut out)?;
    }
    if out.is_empty() {
        return Err(parse_err(path, 2, "no trajectories"));
    }
    let n = out[0].n_steps;
    if out.iter().any(|x| x.n_steps != n) {
        return Err(parse_err(path, 0, "paths have different lengths"));
    }
    Ok(out)
}

pub fn read_picard(path: &Path, n_paths: usize) -> Result<Vec<Option<PicardDiagnostics>>> {
    let mut out: Vec<Option<PicardDiagnostics>> = vec![None; n_paths];
    if !path.exists() {
        return Ok(out);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (k, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || parse_err(path, k + 1, "expected `path_id,n,D_n`");
        if f.len() != 3 {
            return Err(bad());
        }
        let p: usize = f[0].parse().map_err(|_| bad())?;
        let v: f64 = f[2].parse().map_err(|_| bad())?;
        let slot = out.get_mut(p).ok_or_else(bad)?.get_or_insert(PicardDiagnostics {
            sup_diffs: Vec::new(),
            iterations_run: 0,
            converged: false,
        });
        slot.sup_diffs.push(v);
        slot.iterations_run += 1;
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub step: f64,
    pub tau: f64,
    pub history: usize,
    pub n_steps: usize,
    pub horizon: f64,
}

/// Everything needed to reproduce a run byte for byte. Timing and worker
/// counts live in a separate `timing.json` so that this file is itself
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub paths: usize,
    pub grid: GridSummary,
    pub config: serde_json::Value,
    pub files: Vec<FileRecord>,
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes files into `dir`, returning their records.
pub struct OutputDir {
    pub dir: PathBuf,
    pub files: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(FileRecord {
            name: name.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents),
        });
        Ok(path)
    }

    /// Writes without recording the file in the inventory.
    pub fn write_untracked(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}
