//! Centralised numerical thresholds.
//!
//! Every threshold used by the solvers and reports lives here so that a
//! single JSON file (pointed to by `HELM1D_TOL_FILE` in the CLI) can
//! override them. Missing keys keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming an optional tolerance override file.
pub const TOL_FILE_ENV: &str = "HELM1D_TOL_FILE";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Endpoints within this distance of -1 / +1 are snapped.
    pub mesh_snap: f64,
    /// Allowed deviation of the width sum from 2.
    pub width_sum: f64,
    /// Smallest admissible frequency.
    pub omega_floor: f64,
    /// `1 - |Q_j|^2` below this value marks the instance effectively resonant.
    pub resonance_gap: f64,
    /// Block-elimination pivot threshold, relative to the row scale.
    pub pivot: f64,
    /// Allowed deviation of `|sigma_j|` from 1 for caller-supplied phases.
    pub unit_modulus: f64,
    /// Products in the Green-column formula switch to log accumulation above this n.
    pub log_product_threshold: usize,
    /// Relative agreement required between solver paths.
    pub path_rel: f64,
    /// Relative transmission / boundary residual bound.
    pub residual_rel: f64,
    /// Relative agreement for determinant identities.
    pub det_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mesh_snap: 1e-12,
            width_sum: 1e-12,
            omega_floor: 1e-8,
            resonance_gap: 1e-14,
            pivot: 1e-14,
            unit_modulus: 1e-12,
            log_product_threshold: 64,
            path_rel: 1e-9,
            residual_rel: 1e-10,
            det_rel: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("tolerance file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Defaults, overridden by the file named in `HELM1D_TOL_FILE` when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(TOL_FILE_ENV) {
            Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_override_keeps_defaults() {
        let t = Tolerances::from_json_str(r#"{"resonance_gap": 1e-10}"#).unwrap();
        assert_eq!(t.resonance_gap, 1e-10);
        assert_eq!(t.pivot, Tolerances::default().pivot);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(Tolerances::from_json_str(r#"{"bogus": 1}"#).is_err());
    }
}
