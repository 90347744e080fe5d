//! Strict JSON configuration files for problem instances.
//!
//! Schema: `{"omega", "mesh", "c", "a"?, "g1": [re, im], "g2": [re, im], "provenance"?}`.
//! Unknown keys are rejected and every medium invariant is checked, with all
//! violations reported at once.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::medium::{LayeredMedium, ProblemInstance};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub omega: f64,
    pub mesh: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    pub g1: [f64; 2],
    pub g2: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl InstanceConfig {
    pub fn from_instance(instance: &ProblemInstance, provenance: Option<serde_json::Value>) -> Self {
        let m = &instance.medium;
        Self {
            omega: instance.omega,
            mesh: m.mesh().to_vec(),
            c: m.speeds().to_vec(),
            a: m.diffusion().map(<[f64]>::to_vec),
            g1: [instance.g1.re, instance.g1.im],
            g2: [instance.g2.re, instance.g2.im],
            provenance,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn to_instance(&self, tol: &Tolerances) -> Result<ProblemInstance> {
        let medium = LayeredMedium::with_tolerances(self.mesh.clone(), self.c.clone(), self.a.clone(), tol)?;
        ProblemInstance::with_tolerances(
            medium,
            self.omega,
            C64::new(self.g1[0], self.g1[1]),
            C64::new(self.g2[0], self.g2[1]),
            tol,
        )
    }
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>, tol: &Tolerances) -> Result<ProblemInstance> {
    InstanceConfig::from_file(path)?.to_instance(tol)
}
