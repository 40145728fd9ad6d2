//! Experiment configuration: a single TOML file with strict top-level
//! schema, plus the profile presets applied before any overrides.

use gate_racer_core::gate_sdf::{SampleCounts, SampleRegion};
use gate_racer_core::mppi::MppiConfig;
use gate_racer_core::perception::dataset::PoseSampling;
use gate_racer_core::sim_harness::{ProviderKind, ScenarioConfig, Track};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// "desk" (M=1024) or "sim" (M=8192).
    #[serde(default = "default_profile")]
    pub profile: String,
    /// Quadrotor preset: "sim-platform" or "racer-370g".
    #[serde(default = "default_quad")]
    pub quad: String,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub track: TrackSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub race: RaceSection,
}

fn default_seed() -> u64 {
    42
}

fn default_profile() -> String {
    "desk".into()
}

fn default_quad() -> String {
    "sim-platform".into()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrackSection {
    pub gates: usize,
    pub radius: f64,
    pub altitude: f64,
    pub laps: usize,
}

impl Default for TrackSection {
    fn default() -> Self {
        Self { gates: 4, radius: 5.0, altitude: 1.0, laps: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScenarioSection {
    pub provider: ProviderKind,
    /// "none", "position", or "yaw".
    pub perturbation: String,
    pub magnitude: f64,
    pub speed_cap: f64,
    pub trials: usize,
    #[serde(default)]
    pub blackout_radius: Option<f64>,
    #[serde(default)]
    pub blackout_steps: Option<usize>,
    #[serde(default)]
    pub rollouts: Option<usize>,
    pub record_log: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Analytic,
            perturbation: "none".into(),
            magnitude: 0.0,
            speed_cap: 3.5,
            trials: 20,
            blackout_radius: None,
            blackout_steps: None,
            rollouts: None,
            record_log: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DatasetSection {
    pub records: usize,
    pub near_surface: usize,
    pub interior: usize,
    pub collision_prone: usize,
    pub global_uniform: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        // 8192 labeled pairs per image
        Self {
            records: 200,
            near_surface: 3072,
            interior: 1536,
            collision_prone: 1536,
            global_uniform: 2048,
        }
    }
}

impl DatasetSection {
    pub fn counts(&self) -> SampleCounts {
        SampleCounts {
            near_surface: self.near_surface,
            interior: self.interior,
            collision_prone: self.collision_prone,
            global_uniform: self.global_uniform,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainSection {
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub points_per_image: usize,
    pub val_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            epochs: 12,
            batch_size: 16,
            lr: 1e-3,
            points_per_image: 512,
            val_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalSection {
    /// Heights of the horizontal slice maps (m, gate frame).
    pub slice_heights: Vec<f64>,
    /// Cells per side of each slice grid.
    pub grid: usize,
    /// Side length of the square slice window (m), centered on the gate.
    pub window: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { slice_heights: vec![-0.25, 0.0, 0.25], grid: 100, window: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RaceSection {
    /// Row axis of the success grid; single entry runs one scenario.
    pub speed_caps: Vec<f64>,
    /// Column axis; interpreted per the scenario perturbation kind.
    pub magnitudes: Vec<f64>,
    /// Minimum pooled success rate; below it the race command exits with
    /// the threshold code.
    #[serde(default)]
    pub min_success_rate: Option<f64>,
}

impl Default for RaceSection {
    fn default() -> Self {
        Self { speed_caps: vec![3.5], magnitudes: vec![0.0], min_success_rate: None }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Validation(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("invalid config: {e}")))?
            }
            None => Self::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !matches!(self.profile.as_str(), "desk" | "sim") {
            return Err(CliError::Validation(format!("unknown profile '{}'", self.profile)));
        }
        if !matches!(self.quad.as_str(), "sim-platform" | "racer-370g") {
            return Err(CliError::Validation(format!("unknown quad preset '{}'", self.quad)));
        }
        if !matches!(self.scenario.perturbation.as_str(), "none" | "position" | "yaw") {
            return Err(CliError::Validation(format!(
                "unknown perturbation '{}'",
                self.scenario.perturbation
            )));
        }
        if self.race.speed_caps.is_empty() || self.race.magnitudes.is_empty() {
            return Err(CliError::Validation("race grid axes must be non-empty".into()));
        }
        self.build_track().validate().map_err(CliError::Validation)?;
        self.build_scenario()?.validate().map_err(CliError::Validation)?;
        Ok(())
    }

    pub fn build_track(&self) -> Track {
        let t = &self.track;
        Track::circular(t.gates, t.radius, t.altitude, t.laps)
    }

    pub fn mppi(&self) -> MppiConfig {
        let mut m = match self.profile.as_str() {
            "sim" => MppiConfig::sim_profile(),
            _ => MppiConfig::desk_profile(),
        };
        if let Some(r) = self.scenario.rollouts {
            m.rollouts = r;
        }
        m
    }

    pub fn build_scenario(&self) -> Result<ScenarioConfig, CliError> {
        use gate_racer_core::dynamics::QuadParams;
        use gate_racer_core::sim_harness::{BlackoutConfig, PerturbationKind};

        let mut s = ScenarioConfig::baseline(self.scenario.provider, self.seed);
        s.mppi = self.mppi();
        s.quad = match self.quad.as_str() {
            "racer-370g" => QuadParams::racer_370g(),
            _ => QuadParams::sim_platform(),
        };
        s.perturbation = match self.scenario.perturbation.as_str() {
            "position" => PerturbationKind::Position,
            "yaw" => PerturbationKind::Yaw,
            _ => PerturbationKind::None,
        };
        s.magnitude = self.scenario.magnitude;
        s.speed_cap = self.scenario.speed_cap;
        s.trials = self.scenario.trials;
        s.record_log = self.scenario.record_log;
        s.blackout = match (self.scenario.blackout_radius, self.scenario.blackout_steps) {
            (Some(radius), Some(steps)) => Some(BlackoutConfig { radius, steps }),
            (None, None) => None,
            _ => {
                return Err(CliError::Validation(
                    "blackout-radius and blackout-steps must be set together".into(),
                ))
            }
        };
        Ok(s)
    }

    pub fn sample_region(&self) -> SampleRegion {
        SampleRegion::default()
    }

    pub fn pose_sampling(&self) -> PoseSampling {
        PoseSampling::default()
    }

    /// Stable digest of the full config for artifact stamping.
    pub fn fingerprint(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
