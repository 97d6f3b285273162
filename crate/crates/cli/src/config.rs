//! Versioned JSON experiment configuration.

use std::path::Path;

use hhcs::coherence::{System, SystemKind};
use hhcs::recovery::Tolerances;
use hhcs::sampling::Strategy;
use hhcs::signals::SignalSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

/// Measurement ratios of the 1-D Gaussian bump preset.
pub const GAUSSIAN_RATIOS: [f64; 11] = [0.02, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Where the per-level sparsities driving the MDS allocation come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SparsitySource {
    /// Effective sparsity of each trial's own signal.
    Oracle,
    /// Per-level maximum over `pregenerated` independent signals, fixed for
    /// the whole run.
    WorstCase { pregenerated: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub system: System,
    pub r: u32,
    pub strategies: Vec<Strategy>,
    pub ratios: Vec<f64>,
    /// `null` runs noiseless.
    pub snr_db: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub signal: SignalSpec,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_source")]
    pub sparsity_source: SparsitySource,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_out")]
    pub out_dir: String,
}

fn default_rho() -> f64 {
    0.995
}

fn default_source() -> SparsitySource {
    SparsitySource::WorstCase { pregenerated: 100 }
}

fn default_out() -> String {
    "results".into()
}

impl ExperimentConfig {
    pub fn system_kind(&self) -> SystemKind {
        SystemKind::new(self.system, self.r)
    }

    /// 1-D Gaussian bump, N = 512, sigma = 64, SNR 20 dB, all three strategies.
    pub fn gaussian() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            system: System::HadDhw1d,
            r: 9,
            strategies: vec![Strategy::Uds, Strategy::Vds, Strategy::Mds],
            ratios: GAUSSIAN_RATIOS.to_vec(),
            snr_db: Some(20.0),
            trials: 100,
            seed: 1,
            signal: SignalSpec::GaussianBump { sigma: 64.0, i0: None },
            rho: default_rho(),
            sparsity_source: default_source(),
            tolerances: Tolerances::default(),
            out_dir: default_out(),
        }
    }

    /// Shepp-Logan phantom at 128 x 128 in the isotropic basis, 10 trials.
    pub fn phantom() -> Self {
        ExperimentConfig {
            system: System::Had2Idhw,
            r: 7,
            ratios: vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0],
            trials: 10,
            signal: SignalSpec::SheppLogan,
            sparsity_source: SparsitySource::Oracle,
            ..Self::gaussian()
        }
    }

    pub fn preset(name: &str) -> CliResult<Self> {
        match name {
            "gaussian" => Ok(Self::gaussian()),
            "phantom" => Ok(Self::phantom()),
            other => Err(CliError::Usage(format!("unknown preset '{other}' (gaussian, phantom)"))),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        let max_r = if self.system.is_2d() { 12 } else { 24 };
        if self.r == 0 || self.r > max_r {
            return bad(format!("r = {} outside 1..={max_r}", self.r));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.trials >= 1 << 32 {
            return bad("too many trials".into());
        }
        if self.strategies.is_empty() {
            return bad("no strategies given".into());
        }
        if self.ratios.is_empty() || self.ratios.len() >= 1 << 20 {
            return bad("ratios must be a non-empty list".into());
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return bad(format!("ratio {r} outside (0, 1]"));
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() {
                return bad("snr_db is NaN".into());
            }
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho = {} outside (0, 1]", self.rho));
        }
        if let SparsitySource::WorstCase { pregenerated: 0 } = self.sparsity_source {
            return bad("worst_case needs at least one pregenerated signal".into());
        }
        if self.system.is_2d() && self.signal.is_1d_only() || !self.system.is_2d() && self.signal.is_2d_only() {
            return bad(format!("signal {:?} does not fit system {}", self.signal, self.system.name()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }
}
