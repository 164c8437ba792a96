//! Run configuration: one JSON document with top-level keys `command`,
//! `seed`, `solver`, `problem`, `sweep` and `output`. Unknown keys are
//! rejected at every level.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub solver: SolverSection,
    /// Inline problem object, or a path to a JSON problem file.
    pub problem: Option<Value>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// `cp`, `mocca`, `mocca_stable` or `admm` (solve only).
    pub kind: Option<String>,
    pub max_iters: Option<usize>,
    pub stop_tol: Option<f64>,
    #[serde(default)]
    pub track_gap: bool,
    pub theta: Option<f64>,
    /// Uniform dual step; needs `tau` as well.
    pub sigma: Option<f64>,
    /// Uniform primal step; needs `sigma` as well.
    pub tau: Option<f64>,
    /// Scale of the row/column-sum preconditioners used when no uniform
    /// steps are given.
    pub precondition_lambda: Option<f64>,
    /// Inner-loop lengths for `mocca_stable`; the last entry repeats.
    pub inner: Option<Vec<usize>>,
    pub divergence_guard: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// sim1 step-size parameters.
    pub lambdas: Option<Vec<f64>>,
    /// sim1 decompositions, `natural` and/or `split`.
    pub variants: Option<Vec<String>>,
    /// sim2 settings of `eta = lambda`.
    pub step_sizes: Option<Vec<f64>>,
    /// sim2 methods, `mocca` and/or `apgd`.
    pub methods: Option<Vec<String>>,
    /// sim2 inner-loop rules for `apgd`.
    pub inner_stops: Option<Vec<InnerStopSpec>>,
    pub threads: Option<usize>,
}

/// Exactly one of `n_step` and `eps`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerStopSpec {
    pub n_step: Option<usize>,
    pub eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Fill the `elapsed_ms` column. Off by default so that reruns are
    /// byte-identical.
    #[serde(default)]
    pub timing: bool,
    /// Also write a gnuplot script for the traces.
    #[serde(default)]
    pub gnuplot: bool,
    /// Also write the generated instance as CSV.
    #[serde(default)]
    pub export_instance: bool,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT_DIR: &str = "out";

/// A parsed config plus the directory that relative paths inside it are
/// resolved against.
#[derive(Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn from_path(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self {
                config: RunConfig::default(),
                base_dir: PathBuf::from("."),
            });
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn check_positive(name: &str, values: &[f64]) -> Result<(), CliError> {
    match values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(v) => Err(config_err(format!("{name} must be positive and finite, got {v}"))),
        None => Ok(()),
    }
}

/// Rejects sections or keys that the running command does not read.
pub fn reject_unused(present: &[(&str, bool)], command: &str) -> Result<(), CliError> {
    match present.iter().find(|(_, set)| *set) {
        Some((name, _)) => Err(config_err(format!("{name} is not used by {command}"))),
        None => Ok(()),
    }
}
