//! System configuration file: geometry, registry and the tunables of the
//! estimator, simulator and classifier. Every section except geometry has
//! defaults, so a config file only needs `[object]`, `[walls]` and `[[cf]]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::SolverSettings;
use crate::geometry::registry::{CfConfig, ObjectConfig, WallConfig};
use crate::geometry::Geometry;

pub const SCHEMA_VERSION: u32 = 1;

const RECT_TOML: &str = include_str!("../config/rect.toml");
const ELLIP_TOML: &str = include_str!("../config/ellip.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub schema_version: u32,
    pub name: String,
    pub object: ObjectConfig,
    pub walls: WallConfig,
    pub cf: Vec<CfConfig>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub simulator: SimulatorConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
}

impl SystemConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { expected: SCHEMA_VERSION, found: cfg.schema_version });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn rect_default() -> Self {
        Self::from_toml(RECT_TOML).expect("bundled rect config is valid")
    }

    pub fn ellip_default() -> Self {
        Self::from_toml(ELLIP_TOML).expect("bundled ellip config is valid")
    }

    /// Bundled config by object name (`rect` or `ellip`).
    pub fn builtin(object: &str) -> Result<Self> {
        match object {
            "rect" => Ok(Self::rect_default()),
            "ellip" => Ok(Self::ellip_default()),
            other => Err(Error::Config(format!("unknown object {other:?}, expected rect or ellip"))),
        }
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::from_config(&self.name, &self.object, &self.walls, &self.cf)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.estimator.validate()?;
        self.simulator.validate()?;
        self.classifier.validate()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Noise standard deviations of the estimator factors (meters / radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorNoiseConfig {
    pub vision_translation: f64,
    pub vision_rotation: f64,
    pub motion_translation: f64,
    pub motion_rotation: f64,
    pub contact: f64,
    pub feature: f64,
    pub point_prior: f64,
    /// Weak pose prior holding nodes that have neither vision nor motion.
    pub hold_prior: f64,
}

impl Default for FactorNoiseConfig {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            vision_translation: 0.003,
            vision_rotation: 1.0 * deg,
            motion_translation: 0.0005,
            // per-step 0.25° inflated by 2° for suction-cup compliance
            motion_rotation: (0.25f64.powi(2) + 2.0f64.powi(2)).sqrt() * deg,
            contact: 0.001,
            feature: 0.001,
            point_prior: 0.03,
            hold_prior: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub rate_hz: f64,
    pub noise: FactorNoiseConfig,
    pub solver: SolverSettings,
    /// Majority vote over the last three predicted CFs.
    pub cf_debounce: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { rate_hz: 10.0, noise: FactorNoiseConfig::default(), solver: SolverSettings::default(), cf_debounce: false }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        positive("estimator.rate_hz", self.rate_hz)?;
        let n = &self.noise;
        for (k, v) in [
            ("vision_translation", n.vision_translation),
            ("vision_rotation", n.vision_rotation),
            ("motion_translation", n.motion_translation),
            ("motion_rotation", n.motion_rotation),
            ("contact", n.contact),
            ("feature", n.feature),
            ("point_prior", n.point_prior),
            ("hold_prior", n.hold_prior),
        ] {
            positive(&format!("estimator.noise.{k}"), v)?;
        }
        if self.solver.max_iterations == 0 || self.solver.relin_every_nodes == 0 {
            return Err(Error::Config("solver iteration counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplianceConfig {
    pub k_t: [f64; 3],
    pub k_r: [f64; 3],
    pub k_c: f64,
    /// Wrench noise std `(fx, fy, fz, tx, ty, tz)`.
    pub wrench_noise: [f64; 6],
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        Self {
            k_t: [2000.0, 2000.0, 1000.0],
            k_r: [3.0, 3.0, 6.0],
            k_c: 10_000.0,
            wrench_noise: [0.05, 0.05, 0.05, 0.002, 0.002, 0.002],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisionNoiseConfig {
    pub translation_std: f64,
    pub rotation_std: f64,
    pub dropout: f64,
    pub outlier_prob: f64,
    pub outlier_translation: f64,
    pub outlier_rotation: f64,
    pub latency_frames: usize,
}

impl Default for VisionNoiseConfig {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            translation_std: 0.003,
            rotation_std: 1.0 * deg,
            dropout: 0.05,
            outlier_prob: 0.01,
            outlier_translation: 0.03,
            outlier_rotation: 10.0 * deg,
            latency_frames: 2,
        }
    }
}

impl VisionNoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            translation_std: 0.0,
            rotation_std: 0.0,
            dropout: 0.0,
            outlier_prob: 0.0,
            outlier_translation: 0.0,
            outlier_rotation: 0.0,
            latency_frames: 0,
        }
    }
}

/// Misalignment grid: `n × n` evenly spaced offsets over `±max_offset_x`
/// and `±max_offset_yaw`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub max_offset_x: f64,
    pub max_offset_yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatorConfig {
    pub descent_speed: f64,
    pub robot_rate: f64,
    pub vision_rate: f64,
    pub contact_force_stop: f64,
    pub retreat: bool,
    /// Height of the object bottom above the wall tops at the start.
    pub approach_clearance: f64,
    pub compliance: ComplianceConfig,
    pub vision: VisionNoiseConfig,
    pub train_grid: GridConfig,
    pub test_grid: GridConfig,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            descent_speed: 0.005,
            robot_rate: 250.0,
            vision_rate: 30.0,
            contact_force_stop: 2.0,
            retreat: true,
            approach_clearance: 0.0127,
            compliance: ComplianceConfig::default(),
            vision: VisionNoiseConfig::default(),
            train_grid: GridConfig { n: 25, max_offset_x: 0.015, max_offset_yaw: 15.0 * deg },
            test_grid: GridConfig { n: 5, max_offset_x: 0.014, max_offset_yaw: 14.0 * deg },
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        positive("simulator.descent_speed", self.descent_speed)?;
        positive("simulator.robot_rate", self.robot_rate)?;
        positive("simulator.vision_rate", self.vision_rate)?;
        positive("simulator.contact_force_stop", self.contact_force_stop)?;
        if !(self.approach_clearance >= 0.0) {
            return Err(Error::Config("simulator.approach_clearance must be non-negative".into()));
        }
        let c = &self.compliance;
        for v in c.k_t.iter().chain(&c.k_r).chain(std::iter::once(&c.k_c)) {
            positive("simulator.compliance stiffness", *v)?;
        }
        if c.wrench_noise.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("wrench noise std must be non-negative".into()));
        }
        let v = &self.vision;
        probability("simulator.vision.dropout", v.dropout)?;
        probability("simulator.vision.outlier_prob", v.outlier_prob)?;
        if [v.translation_std, v.rotation_std, v.outlier_translation, v.outlier_rotation]
            .iter()
            .any(|x| !(*x >= 0.0))
        {
            return Err(Error::Config("vision noise magnitudes must be non-negative".into()));
        }
        for g in [self.train_grid, self.test_grid] {
            if g.n == 0 {
                return Err(Error::Config("grid needs at least one point".into()));
            }
            if !(g.max_offset_x.abs() <= 0.015 + 1e-12 && g.max_offset_yaw.abs() <= 15f64.to_radians() + 1e-12) {
                return Err(Error::Config("grid offsets exceed the ±15 mm / ±15° workspace".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub grid_c: Vec<f64>,
    pub grid_gamma: Vec<f64>,
    pub folds: usize,
    /// Stop SMO once the maximal KKT violation drops below this.
    pub tolerance: f64,
    pub max_kernel_evals: u64,
    pub cache_mb: usize,
    /// Training-set cap; larger datasets are thinned by a uniform stride.
    pub max_train_samples: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            grid_c: vec![1.0, 10.0, 100.0],
            grid_gamma: vec![0.1, 1.0, 10.0],
            folds: 5,
            tolerance: 1e-3,
            max_kernel_evals: 10_000_000,
            cache_mb: 64,
            max_train_samples: 4000,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_c.is_empty() || self.grid_gamma.is_empty() {
            return Err(Error::Config("classifier grid must not be empty".into()));
        }
        for v in self.grid_c.iter().chain(&self.grid_gamma) {
            positive("classifier grid value", *v)?;
        }
        if self.folds < 2 {
            return Err(Error::Config("classifier.folds must be at least 2".into()));
        }
        positive("classifier.tolerance", self.tolerance)?;
        if self.max_train_samples < 2 {
            return Err(Error::Config("classifier.max_train_samples must be at least 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_load() {
        let r = SystemConfig::rect_default();
        assert_eq!(r.name, "rect");
        assert_eq!(r.geometry().unwrap().registry.len(), 9);
        let e = SystemConfig::ellip_default();
        assert_eq!(e.geometry().unwrap().registry.len(), 3);
        assert_eq!(r.estimator, e.estimator);
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let text = RECT_TOML.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(SystemConfig::from_toml(&text), Err(Error::SchemaVersion { found: 7, .. })));
    }

    #[test]
    fn overrides_apply() {
        let text = format!("{RECT_TOML}\n[simulator.vision]\ndropout = 1.0\n\n[estimator.noise]\ncontact = 0.002\n");
        let c = SystemConfig::from_toml(&text).unwrap();
        assert_eq!(c.simulator.vision.dropout, 1.0);
        assert_eq!(c.estimator.noise.contact, 0.002);
        assert_eq!(c.estimator.noise.vision_translation, 0.003);
    }

    #[test]
    fn invalid_values_rejected() {
        let text = format!("{RECT_TOML}\n[simulator.vision]\ndropout = 1.5\n");
        assert!(matches!(SystemConfig::from_toml(&text), Err(Error::Config(_))));
        let text = format!("{RECT_TOML}\n[classifier]\nfolds = 1\n");
        assert!(SystemConfig::from_toml(&text).is_err());
    }
}
