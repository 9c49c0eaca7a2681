use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapters::AdapterConfig;
use crate::camera::{TrajectoryKind, TrajectorySpec};
use crate::cim::{DEFAULT_FG_ALPHA, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::inpaint::{InpaintRequestSpec, DEFAULT_HOLE_THRESHOLD, DEFAULT_TELEA_RADIUS};
use crate::oracle::SceneSpec;
use crate::pwm::ScheduleKind;

/// Where the source video comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    /// Synthetic scene rendered by the oracle; the standard scene if unset.
    Oracle { scene: Option<SceneSpec> },
    /// Text-to-video through the generate adapter.
    Prompt,
    /// Directory of frame images, taken in file-name order.
    Video { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub source: SourceConfig,
    /// Scene description for generation, inpainting and scoring.
    pub prompt: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
    pub trajectory: TrajectorySpec<f64>,
    /// Position of the source camera along the trajectory, in `[0, 1]`.
    pub base_fraction: f64,
    pub timestamps: usize,
    /// Hole area threshold in pixels; scaled from 64 at 160x96 if unset.
    pub hole_threshold: Option<usize>,
    pub bilateral_sizes: Vec<usize>,
    pub sigma_space: f64,
    pub sigma_range: f64,
    pub rho: f64,
    pub fg_alpha: f64,
    pub telea_radius: u32,
    pub inpaint: InpaintRequestSpec,
    pub generation_steps: u32,
    pub guidance: f64,
    pub schedule: ScheduleKind,
    pub adapters: AdapterConfig,
    pub output_dir: PathBuf,
    /// Worker threads; all cores if unset.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: SourceConfig::Oracle { scene: None },
            prompt: String::new(),
            seed: 0,
            width: 160,
            height: 96,
            fov_deg: 55.0,
            trajectory: TrajectorySpec::orbit_arc(25, 4.0, 40.0),
            base_fraction: 0.5,
            timestamps: 49,
            hole_threshold: None,
            bilateral_sizes: vec![3, 5],
            sigma_space: 1.0,
            sigma_range: 0.1,
            rho: DEFAULT_RHO,
            fg_alpha: DEFAULT_FG_ALPHA,
            telea_radius: DEFAULT_TELEA_RADIUS,
            inpaint: InpaintRequestSpec::default(),
            generation_steps: 50,
            guidance: 6.0,
            schedule: ScheduleKind::FarthestMinOverlap,
            adapters: AdapterConfig::default(),
            output_dir: PathBuf::from("out"),
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.timestamps == 0 {
            return bad("timestamps must be at least 1");
        }
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be at least 1x1");
        }
        if !(0.0..=1.0).contains(&self.base_fraction) {
            return bad("base_fraction must lie in [0, 1]");
        }
        if self.hole_threshold == Some(0) {
            return bad("hole threshold must be at least 1");
        }
        if self.bilateral_sizes.iter().any(|&s| s == 0 || s % 2 == 0) {
            return bad("bilateral sizes must be odd");
        }
        if !(self.sigma_space > 0.0 && self.sigma_range > 0.0) {
            return bad("bilateral sigmas must be positive");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.fg_alpha) {
            return bad("fg_alpha must lie in [0, 1]");
        }
        if self.telea_radius == 0 {
            return bad("telea radius must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        if let SourceConfig::Oracle { scene: Some(s) } = &self.source {
            s.validate()?;
        }
        if self.trajectory.kind == TrajectoryKind::CustomList && self.trajectory.poses.is_empty() {
            return bad("custom trajectory needs poses");
        }
        self.trajectory.validate()?;
        self.inpaint.validate()?;
        self.adapters.validate()
    }

    pub fn effective_hole_threshold(&self) -> usize {
        self.hole_threshold
            .unwrap_or_else(|| crate::inpaint::scaled_hole_threshold(DEFAULT_HOLE_THRESHOLD, self.width, self.height))
    }

    /// The oracle scene, if the source is synthetic.
    pub fn scene(&self) -> Option<SceneSpec> {
        match &self.source {
            SourceConfig::Oracle { scene } => Some(scene.clone().unwrap_or_else(|| SceneSpec::standard(self.seed))),
            _ => None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    /// The keys a TOML file sets, as JSON, for layering over other sources.
    pub fn load_table(path: &Path) -> Result<serde_json::Value> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: toml::Table = toml::from_str(&s).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        serde_json::to_value(table).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.trajectory.num_views, 25);
        assert_eq!(c.timestamps, 49);
        assert_eq!(c.inpaint.n_candidates, 10);
        assert_eq!(c.effective_hole_threshold(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let c = PipelineConfig {
            timestamps: 8,
            hole_threshold: Some(40),
            ..Default::default()
        };
        let s = c.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&s).unwrap(), c);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = PipelineConfig::from_toml_str("timestamps = 3\n[adapters]\nretries = 5\n").unwrap();
        assert_eq!(c.timestamps, 3);
        assert_eq!(c.adapters.retries, 5);
        assert_eq!(c.width, 160);
    }

    #[test]
    fn invalid_values_rejected() {
        for c in [
            PipelineConfig {
                timestamps: 0,
                ..Default::default()
            },
            PipelineConfig {
                bilateral_sizes: vec![4],
                ..Default::default()
            },
            PipelineConfig {
                rho: 1.5,
                ..Default::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}
