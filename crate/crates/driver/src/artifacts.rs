//! Artifact files in the output directory: CSV tables, JSON records and the
//! manifest that ties them to a config hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use zerotemp_core::transfer::EigenPair;
use zerotemp_core::tropical::{Direction, Subaction, SubactionKind};

use crate::error::{CliError, Result};

/// Fixed-width scientific notation with 17 significant digits, which
/// round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| CliError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(OutDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write_text(rel, &text)
    }

    /// Writes a CSV whose columns are all floats.
    pub fn write_columns(&self, rel: &str, header: &[&str], columns: &[&[f64]]) -> Result<()> {
        let rows = columns.first().map_or(0, |c| c.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for r in 0..rows {
            w.write_record(columns.iter().map(|c| fmt_f64(c[r]))).expect("in-memory write");
        }
        self.write_text(rel, &String::from_utf8(w.into_inner().expect("flush")).expect("utf8"))
    }

    /// Writes a CSV from preformatted rows.
    pub fn write_rows(&self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(&row).expect("in-memory write");
        }
        self.write_text(rel, &String::from_utf8(w.into_inner().expect("flush")).expect("utf8"))
    }

    /// Missing or unreadable artifacts are reported as missing, naming the
    /// subcommand that produces them.
    pub fn read_json<T: DeserializeOwned>(&self, rel: &str, needs: &'static str) -> Result<T> {
        let missing = || CliError::MissingArtifact {
            artifact: self.path(rel).display().to_string(),
            needs,
        };
        let text = fs::read_to_string(self.path(rel)).map_err(|_| missing())?;
        serde_json::from_str(&text).map_err(|_| missing())
    }

    pub fn read_columns(&self, rel: &str, header: &[&str], needs: &'static str) -> Result<Vec<Vec<f64>>> {
        let missing = || CliError::MissingArtifact {
            artifact: self.path(rel).display().to_string(),
            needs,
        };
        let mut r = csv::Reader::from_path(self.path(rel)).map_err(|_| missing())?;
        let found = r.headers().map_err(|_| missing())?.clone();
        if found.iter().ne(header.iter().copied()) {
            return Err(missing());
        }
        let mut cols = vec![Vec::new(); header.len()];
        for rec in r.records() {
            let rec = rec.map_err(|_| missing())?;
            for (c, field) in cols.iter_mut().zip(rec.iter()) {
                c.push(field.parse::<f64>().map_err(|_| missing())?);
            }
        }
        Ok(cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub completed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KarpRecord {
    pub m: f64,
    pub karp_formula: f64,
    pub cycle: Vec<usize>,
    pub cycle_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubactionMeta {
    pub direction: String,
    pub kind: String,
    pub m: f64,
    pub normalization: usize,
    pub residual: f64,
    pub iterations: usize,
}

pub fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    }
}

pub fn kind_name(k: SubactionKind) -> &'static str {
    match k {
        SubactionKind::Calibrated => "calibrated",
        SubactionKind::Separating => "separating",
        SubactionKind::Plain => "plain",
    }
}

fn kind_from_name(s: &str) -> Option<SubactionKind> {
    match s {
        "calibrated" => Some(SubactionKind::Calibrated),
        "separating" => Some(SubactionKind::Separating),
        "plain" => Some(SubactionKind::Plain),
        _ => None,
    }
}

pub fn write_subaction(out: &OutDir, stem: &str, s: &Subaction, x: &[f64]) -> Result<()> {
    out.write_columns(&format!("{stem}.csv"), &["x", "u"], &[x, &s.values])?;
    out.write_json(
        &format!("{stem}.json"),
        &SubactionMeta {
            direction: direction_name(s.direction).into(),
            kind: kind_name(s.kind).into(),
            m: s.m,
            normalization: s.normalization,
            residual: s.residual,
            iterations: s.iterations,
        },
    )
}

pub fn read_subaction(out: &OutDir, stem: &str, needs: &'static str) -> Result<Subaction> {
    let meta: SubactionMeta = out.read_json(&format!("{stem}.json"), needs)?;
    let mut cols = out.read_columns(&format!("{stem}.csv"), &["x", "u"], needs)?;
    let direction = match meta.direction.as_str() {
        "forward" => Direction::Forward,
        "backward" => Direction::Backward,
        _ => {
            return Err(CliError::MissingArtifact {
                artifact: out.path(&format!("{stem}.json")).display().to_string(),
                needs,
            })
        }
    };
    let kind = kind_from_name(&meta.kind).ok_or_else(|| CliError::MissingArtifact {
        artifact: out.path(&format!("{stem}.json")).display().to_string(),
        needs,
    })?;
    Ok(Subaction {
        values: cols.swap_remove(1),
        direction,
        kind,
        m: meta.m,
        normalization: meta.normalization,
        residual: meta.residual,
        iterations: meta.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenMeta {
    pub cache_key: String,
    pub beta: f64,
    pub lambda: f64,
    pub log_lambda: f64,
    pub log_lambda_backward: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub fn beta_dir(beta: f64) -> String {
    format!("beta_{beta}")
}

pub fn write_eigenpair(out: &OutDir, ep: &EigenPair, key: &str, x: &[f64]) -> Result<()> {
    let dir = beta_dir(ep.beta);
    out.write_columns(&format!("{dir}/eigen.csv"), &["x", "phi", "phi_bar"], &[x, &ep.phi, &ep.phi_bar])?;
    out.write_json(
        &format!("{dir}/eigen.json"),
        &EigenMeta {
            cache_key: key.into(),
            beta: ep.beta,
            lambda: ep.lambda,
            log_lambda: ep.log_lambda,
            log_lambda_backward: ep.log_lambda_backward,
            iterations: ep.iterations,
            residual: ep.residual,
        },
    )
}

/// Loads a cached eigenpair; `None` when absent or computed for other inputs.
pub fn cached_eigenpair(out: &OutDir, beta: f64, key: &str) -> Option<EigenPair> {
    let dir = beta_dir(beta);
    let meta: EigenMeta = out.read_json(&format!("{dir}/eigen.json"), "solve").ok()?;
    if meta.cache_key != key {
        return None;
    }
    let mut cols = out
        .read_columns(&format!("{dir}/eigen.csv"), &["x", "phi", "phi_bar"], "solve")
        .ok()?;
    let phi_bar = cols.pop()?;
    let phi = cols.pop()?;
    Some(EigenPair {
        beta: meta.beta,
        lambda: meta.lambda,
        log_lambda: meta.log_lambda,
        log_lambda_backward: meta.log_lambda_backward,
        phi,
        phi_bar,
        iterations: meta.iterations,
        residual: meta.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
