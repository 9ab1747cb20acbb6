//! Study configuration, read from TOML.
//!
//! ```toml
//! dimension = 2
//! order = 2
//! bdf_order = 3            # default: order + 1
//! final_time = 1.0
//! flow_mode = "fallback"   # or "strict"
//! data_mode = "interpolated"
//!
//! [[levels]]
//! h = 0.4
//! tau = 0.25
//!
//! [[levels]]
//! h = 0.2
//! tau = 0.125
//!
//! [solver]
//! method = "auto"
//! rel_tol = 1e-12
//!
//! [output]
//! dir = "out"
//! stem = "study"
//! ```

use crate::error::{Error, Result};
use crate::evolution::FlowMode;
use crate::fem::DataMode;
use crate::linsolve::SolverConfig;
use crate::ref_elem::MAX_ORDER;
use crate::timestepper::{BdfConfig, VelocityMode, MAX_BDF_ORDER};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    /// Target mesh size handed to the generator.
    pub h: f64,
    pub tau: f64,
}

/// Where the exact solution or the coefficients are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointMode {
    #[default]
    Discrete,
    Lifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub stem: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), stem: "study".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub dimension: usize,
    pub order: usize,
    /// BDF order; `order + 1` when absent.
    pub bdf_order: Option<usize>,
    pub final_time: f64,
    /// Amplitude of the axis oscillation of the interface.
    pub amplitude: f64,
    pub levels: Vec<Level>,
    /// Optional gmsh meshes, one per level; required in 3D.
    pub mesh_files: Vec<PathBuf>,
    pub flow_mode: FlowMode,
    pub data_mode: DataMode,
    pub coefficient_evaluation: PointMode,
    pub error_evaluation: PointMode,
    pub mesh_velocity: VelocityMode,
    /// Quadrature degree; `2 order + 2` when absent.
    pub quad_degree: Option<usize>,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    /// Seed for randomized checks; the solve itself is deterministic.
    pub seed: u64,
    /// Sequential factorization so that repeated runs agree bit for bit.
    pub reproducible: bool,
    /// Run levels concurrently.
    pub parallel_levels: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            order: 2,
            bdf_order: None,
            final_time: 1.0,
            amplitude: 0.25,
            levels: default_levels(4, 0.4, 0.25),
            mesh_files: Vec::new(),
            flow_mode: FlowMode::Fallback,
            data_mode: DataMode::Interpolated,
            coefficient_evaluation: PointMode::Discrete,
            error_evaluation: PointMode::Discrete,
            mesh_velocity: VelocityMode::Bdf,
            quad_degree: None,
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
            seed: 0,
            reproducible: true,
            parallel_levels: false,
        }
    }
}

/// `n` levels with `h` and `tau` halving from the given coarsest values.
pub fn default_levels(n: usize, h0: f64, tau0: f64) -> Vec<Level> {
    (0..n).map(|i| Level { h: h0 / 2f64.powi(i as i32), tau: tau0 / 2f64.powi(i as i32) }).collect()
}

impl StudyConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn q(&self) -> usize {
        self.bdf_order.unwrap_or(self.order + 1)
    }

    pub fn bdf(&self, level: usize) -> Result<BdfConfig> {
        let l = self.levels.get(level).ok_or_else(|| Error::Config(format!("no level {level}")))?;
        BdfConfig::new(self.q(), l.tau, self.final_time)
    }

    /// Checks that hold for single runs; studies also need two levels.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dimension != 2 && self.dimension != 3 {
            return bad(format!("dimension must be 2 or 3, got {}", self.dimension));
        }
        if self.order == 0 || self.order > MAX_ORDER {
            return bad(format!("order must lie in 1..={MAX_ORDER}, got {}", self.order));
        }
        if self.q() == 0 || self.q() > MAX_BDF_ORDER {
            return bad(format!("bdf_order must lie in 1..={MAX_BDF_ORDER}, got {}", self.q()));
        }
        if self.levels.is_empty() {
            return bad("at least one level is needed".into());
        }
        if !(self.amplitude.abs() < 1.0) {
            return bad(format!("amplitude must be below 1 in magnitude, got {}", self.amplitude));
        }
        if !self.mesh_files.is_empty() && self.mesh_files.len() != self.levels.len() {
            return bad(format!("{} mesh files for {} levels", self.mesh_files.len(), self.levels.len()));
        }
        if self.dimension == 3 && self.mesh_files.is_empty() {
            return bad("3D runs need mesh_files (the built-in generator is 2D)".into());
        }
        if let Some(d) = self.quad_degree {
            if d < 2 * self.order {
                return bad(format!("quad_degree {d} is below 2 order"));
            }
        }
        for (i, l) in self.levels.iter().enumerate() {
            if !(l.h > 0.0) {
                return bad(format!("level {i}: h must be positive"));
            }
            self.bdf(i).map_err(|e| Error::Config(format!("level {i}: {e}")))?;
        }
        self.solver.check()
    }

    pub fn validate_study(&self) -> Result<()> {
        self.validate()?;
        if self.levels.len() < 2 {
            return Err(Error::Config("a convergence study needs at least two levels".into()));
        }
        Ok(())
    }
}
