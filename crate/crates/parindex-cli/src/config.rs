use std::path::Path;

use parindex::indices::IndexSettings;
use parindex::potential::AnglePotential;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_potential")]
    pub potential: AnglePotential,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub indices: IndexConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IntegratorConfig {
    pub tol: f64,
    pub tau_max: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IndexConfig {
    pub cap: usize,
    pub mesh: usize,
    pub extend: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { tol: 1e-11, tau_max: 600.0, eps: 1e-6 }
    }
}

impl Default for IndexConfig {
    fn default() -> Self {
        let s = IndexSettings::default();
        IndexConfig { cap: s.cap, mesh: s.mesh, extend: s.extend }
    }
}

fn default_potential() -> AnglePotential {
    AnglePotential::anisotropic(1.0, 2.0).expect("default potential")
}

fn default_seed() -> u64 {
    0x5eed
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: default_potential(),
            integrator: IntegratorConfig::default(),
            indices: IndexConfig::default(),
            seed: default_seed(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        // serde_json reports line and column of the offending token
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        let i = &self.integrator;
        if !(1e-13..=1e-6).contains(&i.tol) {
            return Err(format!("integrator.tol = {} outside [1e-13, 1e-6]", i.tol));
        }
        if !(1e-8..=1e-4).contains(&i.eps) {
            return Err(format!("integrator.eps = {} outside [1e-8, 1e-4]", i.eps));
        }
        if !(i.tau_max > 0.0 && i.tau_max.is_finite()) {
            return Err(format!("integrator.tauMax = {} must be positive", i.tau_max));
        }
        if self.indices.cap == 0 {
            return Err("indices.cap must be at least 1".into());
        }
        if self.indices.mesh < 500 {
            return Err(format!("indices.mesh = {} below the 500-node minimum", self.indices.mesh));
        }
        if !(self.indices.extend > 0.0) {
            return Err(format!("indices.extend = {} must be positive", self.indices.extend));
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration as compact JSON.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn index_settings(&self) -> IndexSettings {
        IndexSettings {
            cap: self.indices.cap,
            mesh: self.indices.mesh,
            extend: self.indices.extend,
            integrator_tol: self.integrator.tol,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_errors() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        c.validate().unwrap();
        assert_eq!(c.hash(), RunConfig::default().hash());
        let bad = "{\n  \"seed\": 1,\n  \"integrator\": {\"tol\": 1e-3, \"tauMax\": 1, \"eps\": 1e-6}\n}";
        let c: RunConfig = serde_json::from_str(bad).unwrap();
        assert!(c.validate().unwrap_err().contains("integrator.tol"));
        let e = serde_json::from_str::<RunConfig>("{\n \"potential\": {\"alpha\": 1, \"kind\": \"anisotropic\", \"mu\": 0.5},\n \"seed\": 1\n}")
            .unwrap_err();
        assert_eq!(e.line(), 2);
        let e = serde_json::from_str::<RunConfig>("{\"sede\": 3}").unwrap_err();
        assert!(e.to_string().contains("unknown field"));
    }
}
