//! Experiment configuration: JSON schema, defaults and validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zerotemp_core::potentials::perturb;
use zerotemp_core::{Builtin, Polynomial, Potential};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    /// Coefficients of `f(x) = sum c_k x^k`, added as `A(x, y) + f(x)`.
    pub poly: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub eigen_tol: f64,
    pub calib_tol: f64,
    /// Defaults to `1e-6 lip(A) / (n - 1)`.
    pub omega_tol: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eigen_tol: 1e-12,
            calib_tol: 1e-7,
            omega_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Flags {
    pub dump_kernel: bool,
    pub run_ldp: bool,
    pub run_mane: bool,
    pub run_graph: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            dump_kernel: false,
            run_ldp: true,
            run_mane: true,
            run_graph: true,
        }
    }
}

fn default_betas() -> Vec<f64> {
    vec![4.0, 8.0, 16.0, 32.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    pub n: usize,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    /// Each cylinder is a list of `[lo, hi]` intervals, one per coordinate.
    #[serde(default)]
    pub cylinders: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub flags: Flags,
}

/// The potential a config describes.
pub type Model = Box<dyn Potential + Send + Sync>;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate().map_err(|(key, msg)| match key_line(text, key) {
            Some(line) => CliError::Config(format!("line {line}: {msg}")),
            None => CliError::Config(msg),
        })?;
        Ok(cfg)
    }

    /// Returns the offending key together with the message.
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.n < 2 {
            return Err(("n", format!("n must be at least 2, got {}", self.n)));
        }
        if self.betas.is_empty() {
            return Err(("betas", "betas must not be empty".into()));
        }
        if self.betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(("betas", "betas must be positive and finite".into()));
        }
        if self.betas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(("betas", "betas must be strictly increasing".into()));
        }
        for (k, cyl) in self.cylinders.iter().enumerate() {
            if cyl.len() < 2 {
                return Err(("cylinders", format!("cylinder {k} needs at least two intervals")));
            }
            for &[lo, hi] in cyl {
                if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || !(lo < hi) {
                    return Err(("cylinders", format!("cylinder {k}: interval [{lo}, {hi}] is not inside [0, 1]")));
                }
            }
        }
        if self.flags.run_ldp && !self.cylinders.is_empty() && self.betas.len() < 3 {
            return Err(("betas", "the rate table needs at least three betas".into()));
        }
        let t = &self.tolerances;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(t.eigen_tol) || !positive(t.calib_tol) || t.omega_tol.is_some_and(|v| !positive(v)) {
            return Err(("tolerances", "tolerances must be positive".into()));
        }
        if self.perturbation.poly.iter().any(|c| !c.is_finite()) {
            return Err(("poly", "perturbation coefficients must be finite".into()));
        }
        self.builtin().map_err(|e| ("potential", e.to_string()))?;
        Ok(())
    }

    fn builtin(&self) -> zerotemp_core::Result<Builtin> {
        Builtin::from_name(&self.potential.name, &self.potential.params)
    }

    pub fn model(&self) -> Model {
        let base = self.builtin().expect("validated");
        let poly = Polynomial::new(self.perturbation.poly.clone());
        if poly.is_zero() {
            Box::new(base)
        } else {
            Box::new(perturb(base, poly))
        }
    }

    pub fn cylinder_intervals(&self, k: usize) -> Vec<(f64, f64)> {
        self.cylinders[k].iter().map(|&[lo, hi]| (lo, hi)).collect()
    }

    /// SHA-256 over the canonical JSON of everything except the output
    /// location.
    pub fn hash(&self) -> String {
        hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Key for a cached eigenpair: only the inputs it depends on.
    pub fn eigen_key(&self, beta: f64) -> String {
        let key = serde_json::json!({
            "potential": self.potential,
            "perturbation": self.perturbation,
            "n": self.n,
            "beta": beta,
            "eigen_tol": self.tolerances.eigen_tol,
        });
        hex(&serde_json::to_vec(&key).expect("key serializes"))
    }
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// 1-based line of the first occurrence of `"key"`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::parse(r#"{"potential": {"name": "product"}, "n": 21}"#).unwrap();
        assert_eq!(cfg.betas, vec![4.0, 8.0, 16.0, 32.0]);
        assert!(cfg.flags.run_ldp);
        assert_eq!(cfg.model().name(), "product");
    }

    #[test]
    fn validation_names_the_line() {
        let text = "{\n  \"potential\": {\"name\": \"product\"},\n  \"n\": 1\n}";
        match ExperimentConfig::parse(text) {
            Err(CliError::Config(msg)) => assert!(msg.starts_with("line 3:"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        for text in [
            r#"{"potential": {"name": "nope"}, "n": 21}"#,
            r#"{"potential": {"name": "product"}, "n": 21, "betas": [2, 1]}"#,
            r#"{"potential": {"name": "product"}, "n": 21, "cylinders": [[[0.5, 0.2], [0, 1]]]}"#,
            r#"{"potential": {"name": "product"}, "n": 21, "betas": [1, 2], "cylinders": [[[0, 1], [0, 1]]]}"#,
            r#"{"potential": {"name": "product"}, "n": 21, "extra": 1}"#,
            r#"{"potential": {"name": "xy_cosine_magnetic"}, "n": 21}"#,
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn output_dir_does_not_change_the_hash() {
        let a = ExperimentConfig::parse(r#"{"potential": {"name": "product"}, "n": 21}"#).unwrap();
        let b = ExperimentConfig::parse(r#"{"potential": {"name": "product"}, "n": 21, "output_dir": "x"}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.eigen_key(4.0), a.eigen_key(8.0));
    }
}
