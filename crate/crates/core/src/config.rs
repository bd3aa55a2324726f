//! Run configuration: one TOML file covering model, training, tracing,
//! meshing, evaluation and paths.
//!
//! ```toml
//! [model]
//! sdf_hidden = [512, 512, 512, 512, 512, 512, 512, 512]
//! sdf_skip = [4]
//! pe_octaves = 6
//! descriptor_width = 256
//! softplus_beta = 100.0
//! light_hidden = [512, 512, 512, 512]
//! view_octaves = 4
//! light_field = true
//!
//! [train]          # every TrainConfig field
//! epochs = 1800
//! [train.weights]  # every LossWeights field
//! eikonal = 0.1
//!
//! [tracer]         # lengths relative to the box diagonal
//! max_steps = 128
//! hit_tol = 5e-5
//! step_max = 0.5
//! t_max = 2.0
//!
//! [mesh]
//! resolution = 512
//! iso = 0.0
//!
//! [eval]
//! distance_factor = 3.0
//! angle_deg = 30.0
//! density = 0.005   # optional, scene units
//! seed = 0
//!
//! [paths]
//! data_dir = "data" # optional
//! run_dir = "run"   # optional
//! ```
//!
//! Missing keys take their defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffmlp::{Activation, MlpArchitecture};
use crate::error::{Error, Result};
use crate::geom::Aabb;
use crate::metrics::{DEFAULT_ANGLE_DEG, DEFAULT_DISTANCE_FACTOR};
use crate::tracer::TraceParams;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sdf_hidden: Vec<usize>,
    /// 1-based hidden layers that also receive the encoded input.
    pub sdf_skip: Vec<usize>,
    pub pe_octaves: usize,
    pub descriptor_width: usize,
    pub softplus_beta: f64,
    pub light_hidden: Vec<usize>,
    pub view_octaves: usize,
    /// Train a surface light field when images are available.
    pub light_field: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let sdf = MlpArchitecture::default_sdf();
        let light = MlpArchitecture::default_light_field();
        Self {
            sdf_hidden: sdf.hidden,
            sdf_skip: sdf.skip_layers,
            pe_octaves: sdf.pe_octaves,
            descriptor_width: sdf.descriptor_width,
            softplus_beta: crate::diffmlp::DEFAULT_SOFTPLUS_BETA,
            light_hidden: light.hidden,
            view_octaves: light.pe_octaves,
            light_field: true,
        }
    }
}

impl ModelConfig {
    pub fn sdf_arch(&self) -> Result<MlpArchitecture> {
        let mut a = MlpArchitecture::sdf(self.sdf_hidden.clone(), self.sdf_skip.clone(), self.pe_octaves, self.descriptor_width);
        a.activation = Activation::Softplus { beta: self.softplus_beta };
        a.validate()?;
        Ok(a)
    }

    pub fn light_arch(&self) -> Result<MlpArchitecture> {
        let a = MlpArchitecture::light_field(self.light_hidden.clone(), self.descriptor_width, self.view_octaves);
        a.validate()?;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracerConfig {
    pub max_steps: usize,
    pub hit_tol: f64,
    pub step_max: f64,
    pub t_max: f64,
}

impl Default for TracerConfig {
    fn default() -> Self {
        let p = TraceParams::for_box(&Aabb::unit());
        let diag = Aabb::unit().diagonal();
        Self {
            max_steps: p.max_steps,
            hit_tol: p.hit_tol / diag,
            step_max: p.step_max / diag,
            t_max: p.t_max / diag,
        }
    }
}

impl TracerConfig {
    pub fn params(&self, domain: &Aabb) -> TraceParams {
        let diag = domain.diagonal();
        TraceParams {
            max_steps: self.max_steps,
            hit_tol: self.hit_tol * diag,
            step_max: self.step_max * diag,
            t_max: self.t_max * diag,
            ..TraceParams::for_box(domain)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub resolution: usize,
    pub iso: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { resolution: 512, iso: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Distance threshold in units of the sample density.
    pub distance_factor: f64,
    pub angle_deg: f64,
    /// Resampling density in scene units; when absent it is derived from
    /// the ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            distance_factor: DEFAULT_DISTANCE_FACTOR,
            angle_deg: DEFAULT_ANGLE_DEG,
            density: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tracer: TracerConfig,
    pub mesh: MeshConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.sdf_arch().map_err(|e| Error::Config(format!("model: {e}")))?;
        if self.model.light_field {
            self.model.light_arch().map_err(|e| Error::Config(format!("model: {e}")))?;
        }
        if self.tracer.max_steps == 0 || !(self.tracer.hit_tol > 0.0) || !(self.tracer.step_max > 0.0) || !(self.tracer.t_max > 0.0) {
            return Err(Error::Config("tracer settings must be positive".into()));
        }
        if self.mesh.resolution < 2 {
            return Err(Error::Config("mesh.resolution must be at least 2".into()));
        }
        if !self.mesh.iso.is_finite() {
            return Err(Error::Config("mesh.iso must be finite".into()));
        }
        if !(self.eval.distance_factor > 0.0) || !(self.eval.angle_deg > 0.0) || self.eval.density.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config("eval thresholds and density must be positive".into()));
        }
        Ok(())
    }
}
