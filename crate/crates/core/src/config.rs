//! Single JSON configuration document with embedded defaults.

use serde::{Deserialize, Serialize};

use crate::dynamics::PlatformParams;
use crate::mpc::MpcConfig;
use crate::pilots::{DriftOdometryConfig, StackContext};
use crate::policy::{InputNorm, OutputSquash};
use crate::sensing::{CameraModel, ImuParams, SceneConfig, TrackerConfig};
use crate::sim::SensorConfig;
use crate::trajectory::ManeuverParams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatformSection {
    pub params: PlatformParams,
    pub imu: ImuParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSection {
    pub model: CameraModel,
    pub tracker: TrackerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSection {
    /// Weight-initialization seed (combined with the master seed).
    pub init_seed: u64,
    pub norm: InputNorm,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { init_seed: 0, norm: InputNorm::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSection {
    pub runs: usize,
    pub start_pos_jitter: f64,
    pub start_yaw_jitter_deg: f64,
    pub rand_frac: f64,
    pub base_seed: u64,
    pub drift: DriftOdometryConfig,
    pub endurance_seconds: f64,
    pub endurance_runs: usize,
    pub transfer_runs: usize,
    pub transfer_scene_seeds: Vec<u64>,
    pub wasserstein_projections: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            runs: 20,
            start_pos_jitter: 0.1,
            start_yaw_jitter_deg: 5.0,
            rand_frac: 0.10,
            base_seed: 0x5EED,
            drift: DriftOdometryConfig::default(),
            endurance_seconds: 20.0,
            endurance_runs: 20,
            transfer_runs: 10,
            transfer_scene_seeds: vec![1001, 2002],
            wasserstein_projections: 256,
        }
    }
}

/// The whole stack's configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub platform: PlatformSection,
    pub camera: CameraSection,
    pub scene: SceneConfig,
    pub mpc: MpcConfig,
    pub network: NetworkSection,
    pub schedule: crate::dagger::TrainSchedule,
    pub benchmark: BenchmarkSection,
    pub maneuvers: ManeuverParams,
}

impl AppConfig {
    pub fn from_json(text: &str) -> crate::error::Result<Self> {
        let cfg: AppConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        self.platform.params.validate()?;
        self.camera.model.validate()?;
        self.scene.validate()?;
        self.mpc.validate()?;
        Ok(())
    }

    /// Actuator box for the policy's output squashing.
    pub fn squash(&self) -> OutputSquash {
        OutputSquash {
            c_max: self.platform.params.c_max(),
            omega_max: self.platform.params.omega_max,
            g: self.platform.params.g,
        }
    }

    pub fn sensor_config(&self) -> SensorConfig {
        SensorConfig {
            imu: self.platform.imu,
            camera: self.camera.model,
            tracker: self.camera.tracker,
            scene: self.scene,
        }
    }

    pub fn stack_context(&self) -> StackContext {
        StackContext {
            nominal: self.platform.params,
            mpc: self.mpc,
            sensors: self.sensor_config(),
            squash: self.squash(),
            norm: self.network.norm,
        }
    }

    pub fn benchmark_config(&self) -> crate::eval::BenchmarkConfig {
        crate::eval::BenchmarkConfig {
            runs: self.benchmark.runs,
            start_pos_jitter: self.benchmark.start_pos_jitter,
            start_yaw_jitter_deg: self.benchmark.start_yaw_jitter_deg,
            rand_frac: self.benchmark.rand_frac,
            base_seed: self.benchmark.base_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = AppConfig::default();
        let text = cfg.to_json_pretty();
        let back = AppConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
        // All sections present in the dump.
        for key in ["platform", "camera", "scene", "mpc", "network", "schedule", "benchmark", "maneuvers"] {
            assert!(text.contains(&format!("\"{key}\"")), "missing section {key}");
        }
    }

    #[test]
    fn partial_override_keeps_defaults() {
        let cfg = AppConfig::from_json(r#"{"mpc": {"horizon": 25}}"#).unwrap();
        assert_eq!(cfg.mpc.horizon, 25);
        assert_eq!(cfg.mpc.q_pos, MpcConfig::default().q_pos);
        assert_eq!(cfg.benchmark.runs, 20);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(AppConfig::from_json(r#"{"platform": {"params": {"thrust_to_weight": 0.5}}}"#).is_err());
        assert!(AppConfig::from_json(r#"{"camera": {"model": {"fov_deg": 200.0}}}"#).is_err());
    }
}
