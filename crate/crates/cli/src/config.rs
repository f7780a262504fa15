//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use osm_lab::constants::ConstantsConfig;
use osm_lab::fem::{MediumSpec, Source};
use osm_lab::impedance::ImpedanceSpec;
use osm_lab::mesh::MeshFormat;
use osm_lab::skeleton::SolveConfig;
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshConfig {
    /// `n × n` cells on `[-half_width, half_width]²`.
    Structured { n: usize, half_width: f64 },
    File {
        path: PathBuf,
        #[serde(default = "native")]
        format: MeshFormat,
    },
}

fn native() -> MeshFormat {
    MeshFormat::Native
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    /// Balanced greedy growth into `subdomains` connected parts.
    Grown {
        subdomains: usize,
        #[serde(default)]
        seed: u64,
    },
    /// One subdomain label per triangle, one per line.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub wavelength: f64,
    #[serde(default = "one")]
    pub absorption: f64,
    #[serde(default = "one")]
    pub mu: f64,
}

fn one() -> f64 {
    1.0
}

impl MediumConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(format!("medium.wavelength must be positive, got {}", self.wavelength));
        }
        if !(self.absorption >= 0.0 && self.absorption.is_finite()) {
            return Err(format!(
                "medium.absorption must be non-negative, got {}",
                self.absorption
            ));
        }
        Ok(())
    }

    pub fn to_medium(&self) -> Result<MediumSpec, RunError> {
        self.validate().map_err(RunError::Config)?;
        MediumSpec::from_wavelength(self.wavelength, self.absorption, self.mu)
            .map_err(|e| RunError::Config(format!("medium: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            theta_min: -0.4,
            theta_max: 0.5,
            steps: 19,
        }
    }
}

impl SweepConfig {
    /// Evenly spaced angles, strictly increasing.
    pub fn thetas(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.theta_min];
        }
        let h = (self.theta_max - self.theta_min) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.theta_min + h * k as f64).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.steps == 0 {
            return Err("sweep.steps must be positive".into());
        }
        if self.steps > 1 && !(self.theta_min < self.theta_max) {
            return Err(format!(
                "sweep.theta_min ({}) must be below sweep.theta_max ({})",
                self.theta_min, self.theta_max
            ));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if self.theta_min <= -half_pi || self.theta_max >= half_pi {
            return Err("sweep angles must lie strictly inside (-π/2, π/2)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Verify,
    Constants,
    SweepTheta,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Verify => "verify",
            Mode::Constants => "constants",
            Mode::SweepTheta => "sweep_theta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    pub vtk: bool,
    /// Compare against a direct solve of the undecomposed problem.
    pub oracle: bool,
    /// Verify mode also dumps dense `Π`, `Π_loc` and `S` as `row col re im` text.
    pub operators: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            vtk: true,
            oracle: true,
            operators: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub partition: PartitionConfig,
    pub medium: MediumConfig,
    pub impedance: ImpedanceSpec,
    #[serde(default)]
    pub solver: SolveConfig,
    pub source: Source,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub outputs: OutputOptions,
    /// Seed of every random sample drawn by verify and constants runs.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            RunError::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    /// Reads a config; relative paths inside it resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let MeshConfig::File { path, .. } = &mut self.mesh {
            fix(path);
        }
        if let PartitionConfig::File { path } = &mut self.partition {
            fix(path);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let config = |m: String| RunError::Config(m);
        if let MeshConfig::Structured { n, half_width } = self.mesh {
            if n == 0 || !(half_width > 0.0) {
                return Err(config("mesh.structured: n and half_width must be positive".into()));
            }
        }
        if let PartitionConfig::Grown { subdomains: 0, .. } = self.partition {
            return Err(config("partition.grown.subdomains must be positive".into()));
        }
        self.medium.validate().map_err(config)?;
        self.impedance
            .validate()
            .map_err(|e| config(format!("impedance: {e}")))?;
        self.solver.validate().map_err(|e| config(format!("solver: {e}")))?;
        self.sweep.validate().map_err(config)?;
        Ok(())
    }
}
