//! The experiment configuration document: system bank, selection settings,
//! sweep grid, and transfer-study settings, all in one JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gapsel_core::bank::{hex_string, SystemBank};
use gapsel_core::bo::{ProbeMode, SelectionConfig};
use gapsel_core::similarity::FrequencyRange;
use gapsel_core::transfer::TransferConfig;

use crate::CliError;

/// Selection section: the frequency range of interest plus the loop
/// configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionSection {
    pub range: FrequencyRange,
    #[serde(flatten)]
    pub config: SelectionConfig,
}

/// Dense-sweep oracle settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub grid_size: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { grid_size: 2000 }
    }
}

/// Trajectory-suite settings: five shapes times three amplitude scalings,
/// plus optional extra waypoint CSV files appended unscaled.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSection {
    pub duration: f64,
    pub amplitude: f64,
    pub waypoint_csvs: Vec<PathBuf>,
}

impl Default for SuiteSection {
    fn default() -> Self {
        Self {
            duration: 10.5,
            amplitude: 1.0,
            waypoint_csvs: Vec::new(),
        }
    }
}

/// Transfer section: online-learning settings plus the trajectory suite.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TransferSection {
    #[serde(flatten)]
    pub config: TransferConfig,
    #[serde(default)]
    pub suite: SuiteSection,
}

/// The whole experiment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub bank: SystemBank,
    pub selection: SelectionSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub transfer: TransferSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Apply command-line overrides; call before hashing.
    pub fn apply_overrides(&mut self, seed: Option<u64>, probe_mode: Option<ProbeMode>) {
        if let Some(s) = seed {
            self.selection.config.seed = Some(s);
            self.transfer.config.seed = Some(s);
        }
        if let Some(mode) = probe_mode {
            self.selection.config.probe.mode = mode;
        }
    }

    /// Validate everything that can fail before any simulation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.bank.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let target = self
            .bank
            .build_target()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let sources = self
            .bank
            .build_sources()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let range = self.selection.range;
        for sys in std::iter::once(&target).chain(&sources) {
            let nyquist = sys.model().nyquist();
            if range.wmax >= nyquist {
                return Err(CliError::Config(format!(
                    "range upper edge {} rad/s is at or above the Nyquist limit {nyquist:.3} of {}",
                    range.wmax,
                    sys.name()
                )));
            }
        }
        if self.sweep.grid_size < 100 {
            return Err(CliError::Config(format!(
                "sweep grid_size must be at least 100, got {}",
                self.sweep.grid_size
            )));
        }
        if !(self.transfer.suite.duration > 0.0) || !(self.transfer.suite.amplitude > 0.0) {
            return Err(CliError::Config(
                "suite duration and amplitude must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Hash of the effective (override-applied) config document.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex_string(&Sha256::digest(canonical.as_bytes()))
    }
}
