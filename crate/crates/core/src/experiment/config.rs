use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beam::{self, BeamSpec, SpringSpec, DEFAULT_MODAL_DAMPING};
use crate::mlp::{MlpArchitecture, TrainConfig};
use crate::terrain::{self, ProfileTable};
use crate::{Error, Result};

/// Speeds of the speed sweep, m/s.
pub const DEFAULT_SPEEDS: [f64; 5] = [0.1, 0.15, 0.2, 0.25, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingParams {
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainingParams {
    fn default() -> Self {
        let cfg = TrainConfig::default();
        Self {
            layer_sizes: MlpArchitecture::default().layer_sizes,
            learning_rate: cfg.learning_rate,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
        }
    }
}

impl TrainingParams {
    pub fn architecture(&self) -> Result<MlpArchitecture> {
        MlpArchitecture::new(self.layer_sizes.clone())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// Excitation grid of the modal sweep. Amplitudes are given in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub f_b_hz: Vec<f64>,
    pub h_b_mm: Vec<f64>,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            f_b_hz: (1..=7).map(|k| 50.0 * f64::from(k)).collect(),
            h_b_mm: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            sample_rate_hz: 1000.0,
            duration_s: 1.0,
        }
    }
}

/// Everything an experiment command needs. Missing JSON fields take the
/// defaults below, which follow the reference setup: 0.2 m/s, 200 Hz,
/// 1 s windows, 75/25 split, 5 minutes per terrain, 20 repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spring: SpringSpec,
    pub modal_damping: f64,
    /// Distance of the sensor from the clamped base, m.
    pub sensor_position_m: f64,
    /// `"default"`, `"smoke"`, or the path of a profile-table JSON file.
    pub profiles: String,
    pub speed_mps: f64,
    pub speeds_mps: Vec<f64>,
    pub duration_s: f64,
    pub window_s: f64,
    pub sample_rate_hz: f64,
    pub train_fraction: f64,
    pub training: TrainingParams,
    pub repetitions: usize,
    pub sweep: SweepConfig,
    /// Largest tolerated share of degenerate windows in `synth`.
    pub max_dropped_fraction: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spring: SpringSpec::default(),
            modal_damping: DEFAULT_MODAL_DAMPING,
            sensor_position_m: 5e-3,
            profiles: "default".into(),
            speed_mps: 0.2,
            speeds_mps: DEFAULT_SPEEDS.to_vec(),
            duration_s: 300.0,
            window_s: 1.0,
            sample_rate_hz: 200.0,
            train_fraction: 0.75,
            training: TrainingParams::default(),
            repetitions: 20,
            sweep: SweepConfig::default(),
            max_dropped_fraction: 0.01,
            out_dir: PathBuf::from("out"),
            seed: 2021,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn beam(&self) -> Result<BeamSpec> {
        let mut b = beam::spring_to_beam(&self.spring)?;
        b.damping = self.modal_damping;
        b.validate()?;
        Ok(b)
    }

    pub fn profile_table(&self) -> Result<ProfileTable> {
        match self.profiles.as_str() {
            "default" => Ok(terrain::default_profiles()),
            "smoke" => Ok(terrain::smoke_profiles()),
            path => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("profile table {path}: {e}")))?;
                ProfileTable::from_json(&text)
            }
        }
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.beam()?;
        if !(self.sensor_position_m >= 0.0 && self.sensor_position_m <= self.spring.free_length) {
            return Err(Error::OutsideBeam {
                x: self.sensor_position_m,
                length: self.spring.free_length,
            });
        }
        for &v in std::iter::once(&self.speed_mps).chain(&self.speeds_mps) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::physics("speed", format!("must be > 0, got {v}")));
            }
        }
        if !(self.duration_s > 0.0 && self.window_s > 0.0 && self.sample_rate_hz > 0.0) {
            return bad(format!(
                "duration {} s, window {} s and sample rate {} Hz must all be > 0",
                self.duration_s, self.window_s, self.sample_rate_hz
            ));
        }
        if self.duration_s < self.window_s {
            return bad(format!(
                "duration {} s is shorter than one {} s window",
                self.duration_s, self.window_s
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_dropped_fraction) {
            return bad(format!(
                "max_dropped_fraction must lie in [0, 1], got {}",
                self.max_dropped_fraction
            ));
        }
        self.training.architecture()?;
        let probe = self.training.train_config(0);
        probe.validate(usize::MAX)?;
        Ok(())
    }
}

/// Child seed for `purpose`: the first 8 bytes (little-endian) of
/// SHA-256(master as little-endian bytes || purpose).
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_setup() {
        let c = ExperimentConfig::default();
        assert_eq!(c.speed_mps, 0.2);
        assert_eq!(c.sample_rate_hz, 200.0);
        assert_eq!(c.window_s, 1.0);
        assert_eq!(c.train_fraction, 0.75);
        assert_eq!(c.duration_s, 300.0);
        assert_eq!(c.speeds_mps, vec![0.1, 0.15, 0.2, 0.25, 0.3]);
        assert_eq!(c.sweep.f_b_hz.len() * c.sweep.h_b_mm.len(), 35);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = ExperimentConfig::default();
        assert_eq!(
            ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(),
            c
        );
        let partial =
            ExperimentConfig::from_json(r#"{"seed": 7, "training": {"epochs": 3}}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.training.epochs, 3);
        assert_eq!(partial.training.batch_size, 32);
        assert!(ExperimentConfig::from_json(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let bad = [
            ExperimentConfig {
                train_fraction: 1.0,
                ..Default::default()
            },
            ExperimentConfig {
                repetitions: 0,
                ..Default::default()
            },
            ExperimentConfig {
                sensor_position_m: 0.1,
                ..Default::default()
            },
            ExperimentConfig {
                modal_damping: 1.5,
                ..Default::default()
            },
            ExperimentConfig {
                speeds_mps: vec![0.1, -0.2],
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn seeds_depend_on_master_and_purpose() {
        let a = derive_seed(1, "synth/flat");
        assert_eq!(a, derive_seed(1, "synth/flat"));
        assert_ne!(a, derive_seed(2, "synth/flat"));
        assert_ne!(a, derive_seed(1, "synth/sand"));
    }
}
