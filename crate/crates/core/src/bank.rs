//! JSON schema for the system bank: named plant/controller pairs from which
//! target and source closed loops are built.
//!
//! Each entry carries either the two-parameter simulation plant
//! (`alpha`/`beta`) or explicit row-major `A`, `B`, `C`, `D` matrices,
//! together with the PD gains and the sampling time.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::lti::{sim_plant, ClosedLoopSystem, PDController, StateSpaceModel, SIM_TS};

/// One plant/controller pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Row-major state matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    pub kp: f64,
    pub kd: f64,
    #[serde(default = "default_ts")]
    pub ts: f64,
}

fn default_ts() -> f64 {
    SIM_TS
}

impl SystemEntry {
    /// Paper-style entry with the two-parameter simulation plant.
    pub fn parametric(name: &str, alpha: f64, beta: f64, kp: f64, kd: f64) -> Self {
        Self {
            name: name.to_string(),
            alpha: Some(alpha),
            beta: Some(beta),
            a: None,
            b: None,
            c: None,
            d: None,
            kp,
            kd,
            ts: SIM_TS,
        }
    }

    fn plant(&self) -> Result<StateSpaceModel> {
        match (&self.alpha, &self.beta, &self.a, &self.b, &self.c) {
            (Some(alpha), Some(beta), None, None, None) => {
                if (self.ts - SIM_TS).abs() > 1e-12 {
                    return Err(CoreError::Config(format!(
                        "{}: the parametric plant is defined at ts = {SIM_TS}, got {}",
                        self.name, self.ts
                    )));
                }
                Ok(sim_plant(*alpha, *beta))
            }
            (None, None, Some(a), Some(b), Some(c)) => {
                let n = a.len();
                if a.iter().any(|row| row.len() != n) {
                    return Err(CoreError::Config(format!(
                        "{}: state matrix rows must all have length {n}",
                        self.name
                    )));
                }
                let flat: Vec<f64> = a.iter().flatten().copied().collect();
                StateSpaceModel::new(
                    nalgebra::DMatrix::from_row_slice(n, n, &flat),
                    nalgebra::DVector::from_column_slice(b),
                    nalgebra::RowDVector::from_row_slice(c),
                    self.d.unwrap_or(0.0),
                    self.ts,
                )
            }
            _ => Err(CoreError::Config(format!(
                "{}: give either {{alpha, beta}} or explicit {{a, b, c}} matrices",
                self.name
            ))),
        }
    }

    /// Build the named closed-loop system.
    pub fn build(&self) -> Result<ClosedLoopSystem> {
        let plant = self.plant()?;
        let controller = PDController::new(self.kp, self.kd, self.ts)?;
        ClosedLoopSystem::new(self.name.clone(), plant, controller)
    }
}

/// The full bank: the target name, the source names, and every system
/// definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemBank {
    pub target: String,
    pub sources: Vec<String>,
    pub systems: Vec<SystemEntry>,
}

impl SystemBank {
    /// The four-system simulation bank used throughout the tests: one
    /// target and three sources differing in gain and drag.
    pub fn simulation_bank() -> Self {
        Self {
            target: "target".into(),
            sources: vec!["S1".into(), "S2".into(), "S3".into()],
            systems: vec![
                SystemEntry::parametric("target", 0.85, 0.003, 5.0, 4.5),
                SystemEntry::parametric("S1", 1.0, 0.003, 5.0, 4.5),
                SystemEntry::parametric("S2", 0.97, 0.004, 5.0, 4.5),
                SystemEntry::parametric("S3", 0.9, 0.001, 5.0, 4.5),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(CoreError::Config("bank lists no sources".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for entry in &self.systems {
            if !seen.insert(entry.name.as_str()) {
                return Err(CoreError::Config(format!(
                    "duplicate system name {:?}",
                    entry.name
                )));
            }
        }
        for name in std::iter::once(&self.target).chain(&self.sources) {
            if !seen.contains(name.as_str()) {
                return Err(CoreError::Config(format!(
                    "bank references undefined system {name:?}"
                )));
            }
        }
        if self.sources.contains(&self.target) {
            return Err(CoreError::Config(format!(
                "target {:?} cannot also be a source",
                self.target
            )));
        }
        Ok(())
    }

    fn entry(&self, name: &str) -> Result<&SystemEntry> {
        self.systems
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CoreError::Config(format!("bank has no system named {name:?}")))
    }

    pub fn build_target(&self) -> Result<ClosedLoopSystem> {
        self.entry(&self.target)?.build()
    }

    pub fn build_sources(&self) -> Result<Vec<ClosedLoopSystem>> {
        self.sources.iter().map(|n| self.entry(n)?.build()).collect()
    }

    /// Content hash of the bank's canonical JSON form, used to detect stale
    /// artifacts.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("bank serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex_string(&digest)
    }
}

/// Lowercase hex encoding of a byte slice.
pub fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_bank_builds() {
        let bank = SystemBank::simulation_bank();
        bank.validate().unwrap();
        let target = bank.build_target().unwrap();
        assert_eq!(target.name(), "target");
        let sources = bank.build_sources().unwrap();
        assert_eq!(sources.len(), 3);
        assert_eq!(sources[1].name(), "S2");
    }

    #[test]
    fn explicit_matrices_build() {
        let entry = SystemEntry {
            name: "raw".into(),
            alpha: None,
            beta: None,
            a: Some(vec![vec![0.9, 0.1], vec![0.0, 0.8]]),
            b: Some(vec![0.0, 0.1]),
            c: Some(vec![1.0, 0.0]),
            d: None,
            kp: 2.0,
            kd: 0.5,
            ts: 0.01,
        };
        let sys = entry.build().unwrap();
        assert_eq!(sys.model().state_dim(), 3);
    }

    #[test]
    fn validation_catches_bad_banks() {
        let mut bank = SystemBank::simulation_bank();
        bank.sources.push("ghost".into());
        assert!(bank.validate().is_err());

        let mut bank = SystemBank::simulation_bank();
        bank.sources.clear();
        assert!(bank.validate().is_err());

        let mut bank = SystemBank::simulation_bank();
        bank.systems.push(SystemEntry::parametric("S1", 1.0, 0.0, 1.0, 1.0));
        assert!(bank.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let bank = SystemBank::simulation_bank();
        let h1 = bank.hash();
        assert_eq!(h1, SystemBank::simulation_bank().hash());
        let mut edited = bank.clone();
        edited.systems[1].alpha = Some(1.01);
        assert_ne!(h1, edited.hash());
    }

    #[test]
    fn bank_json_round_trips() {
        let bank = SystemBank::simulation_bank();
        let text = serde_json::to_string_pretty(&bank).unwrap();
        let back: SystemBank = serde_json::from_str(&text).unwrap();
        assert_eq!(bank, back);
    }
}
