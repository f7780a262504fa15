//! Configuration-driven runs of the skeleton solver: solve, verify, constants
//! and θ-sweep modes, with their CSV/JSON/VTK artifacts.

pub mod config;
pub mod report;
pub mod runner;

use std::path::PathBuf;

use osm_lab::constants::ConstantsError;
use osm_lab::exchange::DenseError;
use osm_lab::fem::FemError;
use osm_lab::impedance::ImpedanceError;
use osm_lab::linalg::LinalgError;
use osm_lab::mesh::MeshError;
use osm_lab::partition::PartitionError;
use osm_lab::skeleton::SolverError;
use thiserror::Error;

pub use config::{Mode, RunConfig};
pub use runner::{run, Outcome, Status};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("mesh {}: {source}", path.display())]
    Mesh { path: PathBuf, source: MeshError },
    #[error("partition: {0}")]
    Partition(#[from] PartitionError),
    #[error("load: {0}")]
    Fem(#[from] FemError),
    #[error("impedance: {0}")]
    Impedance(#[from] ImpedanceError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dense(#[from] DenseError),
}

impl RunError {
    /// Every error is a configuration or I/O failure as far as the caller is concerned.
    pub fn exit_code(&self) -> i32 {
        1
    }
}
