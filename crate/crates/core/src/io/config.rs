//! Run configuration in TOML.
//!
//! ```toml
//! dimension = 2
//! semi_axes = [1.0, 0.7]
//! direction_order = 256
//! radial_samples = 512
//! volume_nodes = [161]        # one entry is used for every axis
//! pipeline = "auto"           # "even" / "odd" must match the dimension
//!
//! [[bumps]]
//! center = [0.2, -0.1]
//! radius = 0.25
//! amplitude = 1.0
//!
//! [verification]
//! tolerance_scale = 1.0
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::forward::{forward_transform, ForwardPath, MeanData, RadialGrid};
use crate::geometry::{build_sphere_quadrature, Ellipsoid, SphereQuadrature};
use crate::phantom::{Phantom, RadialBump};
use crate::reconstruction::{EvenKernelEvaluation, OddIntegrand, ReconImage, ReconstructionOptions, Stage, VolumeGrid};
use crate::verification::{VerificationConfig, DEFAULT_SEED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Chosen from the parity of the dimension.
    #[default]
    Auto,
    Even,
    Odd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dimension: usize,
    pub semi_axes: Vec<f64>,
    pub bumps: Vec<BumpSpec>,
    pub direction_order: usize,
    pub radial_samples: usize,
    /// Largest radius; defaults to just above the ellipsoid diameter bound.
    pub r_max: Option<f64>,
    pub volume_nodes: Vec<usize>,
    pub volume_margin: f64,
    pub pipeline: Pipeline,
    pub forward_path: ForwardPath,
    pub odd_integrand: OddIntegrand,
    /// Tabulation oversampling of the even log kernel; 0 evaluates it exactly.
    pub kernel_oversampling: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub verification: VerificationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dimension: 0,
            semi_axes: Vec::new(),
            bumps: Vec::new(),
            direction_order: 64,
            radial_samples: 256,
            r_max: None,
            volume_nodes: vec![65],
            volume_margin: 0.05,
            pipeline: Pipeline::Auto,
            forward_path: ForwardPath::Analytic,
            odd_integrand: OddIntegrand::Collapsed,
            kernel_oversampling: 4,
            seed: DEFAULT_SEED,
            output_dir: PathBuf::from("out"),
            verification: VerificationConfig::default(),
        }
    }
}

/// Geometry, phantom and discretization built from a validated config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub geometry: Ellipsoid,
    pub phantom: Phantom,
    pub directions: Arc<SphereQuadrature>,
    pub radii: RadialGrid,
    pub grid: VolumeGrid,
}

impl Setup {
    /// Phantom sampled on every grid node.
    pub fn truth(&self) -> ReconImage {
        let values = self.grid.sample(|x| self.phantom.eval(x));
        ReconImage::from_values(self.grid.clone(), values, Stage::LaplacianApplied).expect("sample matches grid")
    }

    pub fn forward(&self, path: ForwardPath) -> Result<MeanData> {
        forward_transform(&self.phantom, &self.geometry, &self.directions, &self.radii, path)
    }
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Checks every invariant and returns the first violation.
    pub fn validate(&self) -> Result<()> {
        self.setup().map(|_| ())
    }

    pub fn is_even(&self) -> bool {
        self.dimension % 2 == 0
    }

    pub fn volume_counts(&self) -> Vec<usize> {
        match self.volume_nodes.as_slice() {
            [k] => vec![*k; self.dimension],
            counts => counts.to_vec(),
        }
    }

    pub fn reconstruction_options(&self) -> ReconstructionOptions {
        ReconstructionOptions {
            odd_integrand: self.odd_integrand,
            even_kernel: match self.kernel_oversampling {
                0 => EvenKernelEvaluation::Exact,
                k => EvenKernelEvaluation::Tabulated { oversampling: k },
            },
        }
    }

    pub fn verification_config(&self) -> VerificationConfig {
        VerificationConfig {
            seed: self.seed,
            ..self.verification.clone()
        }
    }

    pub fn setup(&self) -> Result<Setup> {
        let n = self.dimension;
        let config_err = |msg: String| Error::Config(msg);
        ensure!(n >= 2, Config, "dimension must be at least 2, got {n}");
        ensure!(
            self.semi_axes.len() == n,
            Config,
            "semi_axes has {} entries but dimension is {n}",
            self.semi_axes.len()
        );
        match (self.pipeline, self.is_even()) {
            (Pipeline::Even, false) | (Pipeline::Odd, true) => {
                return Err(config_err(format!(
                    "parity mismatch: pipeline {:?} requested for dimension {n}",
                    self.pipeline
                )))
            }
            _ => {}
        }
        ensure!(self.direction_order >= 1, Config, "direction_order must be positive");
        ensure!(
            self.radial_samples >= 8,
            Config,
            "radial_samples must be at least 8, got {}",
            self.radial_samples
        );
        let counts = self.volume_counts();
        ensure!(
            counts.len() == n,
            Config,
            "volume_nodes needs 1 or {n} entries, got {}",
            self.volume_nodes.len()
        );
        ensure!(
            counts.iter().all(|&c| c >= 3),
            Config,
            "volume_nodes must be at least 3 per axis: {counts:?}"
        );
        ensure!(
            self.volume_margin >= 0.0 && self.volume_margin.is_finite(),
            Config,
            "volume_margin must be non-negative"
        );
        ensure!(
            self.verification.tolerance_scale > 0.0,
            Config,
            "tolerance_scale must be positive"
        );

        let geometry = Ellipsoid::new(self.semi_axes.clone()).map_err(|e| config_err(e.to_string()))?;
        let bumps = self
            .bumps
            .iter()
            .map(|b| RadialBump::new(b.center.clone(), b.radius, b.amplitude))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| config_err(e.to_string()))?;
        let phantom = if bumps.is_empty() {
            Phantom::zero(n)
        } else {
            Phantom::new(bumps, &geometry).map_err(|e| config_err(e.to_string()))?
        };
        let directions =
            Arc::new(build_sphere_quadrature(n, self.direction_order).map_err(|e| config_err(e.to_string()))?);
        let radii = match self.r_max {
            Some(r) => {
                ensure!(
                    r >= geometry.diameter_bound(),
                    Config,
                    "r_max {r} is below the diameter bound {}",
                    geometry.diameter_bound()
                );
                RadialGrid::staggered(self.radial_samples, r)?
            }
            None => RadialGrid::for_ellipsoid(&geometry, self.radial_samples)?,
        };
        let grid = VolumeGrid::new(&geometry, &counts, self.volume_margin).map_err(|e| config_err(e.to_string()))?;
        Ok(Setup {
            geometry,
            phantom,
            directions,
            radii,
            grid,
        })
    }
}
