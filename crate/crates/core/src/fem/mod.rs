//! Transient heat conduction on the active part of the octree mesh:
//! trilinear hexahedra, backward Euler in time, conjugate-gradient solves.

mod assembly;
mod element;
mod nondim;
mod solver;
mod state;

use thiserror::Error;

use crate::octree::OctreeError;
use crate::schedule::VoxelId;

pub use assembly::{AssemblyOptions, Discretization, LinearSystem};
pub use element::{element_matrices, shape, shape_grad, ElementMatrix};
pub use nondim::{nondimensionalize, Scaling};
pub use solver::{dense_solve, pcg, CsrMatrix, SolveStats, SolverError};
pub use state::{activate_voxel, transfer_solution, FieldStats, ThermalState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid boundary values: {0}")]
    InvalidBoundary(String),
    #[error("invalid time step {0}")]
    InvalidTimeStep(f64),
    #[error("voxel ({}, {}, {}) has no active element", .0.i, .0.j, .0.k)]
    NotActive(VoxelId),
    #[error("voxel ({}, {}, {}) was already activated", .0.i, .0.j, .0.k)]
    AlreadyActivated(VoxelId),
    #[error("state has {state} nodes but the mesh has {mesh}")]
    SizeMismatch { state: usize, mesh: usize },
    #[error(transparent)]
    Octree(#[from] OctreeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Thermal properties in non-dimensional units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub kappa: f64,
    pub rho: f64,
    pub cp: f64,
    /// Volumetric source applied to a newly printed element for one step.
    pub latent_source: f64,
}

impl MaterialParams {
    pub fn new(kappa: f64, rho: f64, cp: f64, latent_source: f64) -> Result<Self, FemError> {
        let m = MaterialParams {
            kappa,
            rho,
            cp,
            latent_source,
        };
        m.validate()?;
        Ok(m)
    }

    /// Unit density and heat capacity with conductivity `alpha`.
    pub fn from_alpha(alpha: f64) -> Result<Self, FemError> {
        Self::new(alpha, 1.0, 1.0, 0.0)
    }

    pub fn alpha(&self) -> f64 {
        self.kappa / (self.rho * self.cp)
    }

    pub fn validate(&self) -> Result<(), FemError> {
        for (name, v) in [("kappa", self.kappa), ("rho", self.rho), ("cp", self.cp)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FemError::InvalidMaterial(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.latent_source >= 0.0 && self.latent_source.is_finite()) {
            return Err(FemError::InvalidMaterial(format!(
                "latent_source must be non-negative, got {}",
                self.latent_source
            )));
        }
        Ok(())
    }
}

/// Bed, deposition and inactive-region temperatures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub t_bed: f64,
    pub t_deposit: f64,
    pub t_ambient: f64,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec {
            t_bed: 1.0,
            t_deposit: 2.0,
            t_ambient: 0.0,
        }
    }
}

impl BoundarySpec {
    pub fn validate(&self) -> Result<(), FemError> {
        if [self.t_bed, self.t_deposit, self.t_ambient].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(FemError::InvalidBoundary(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassKind {
    /// Row-sum lumped mass.
    #[default]
    Lumped,
    Consistent,
}

/// How the deposition temperature enters a newly printed voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepositMode {
    /// Nodal overwrite at activation, free evolution afterwards.
    #[default]
    Initial,
    /// Nodal overwrite plus Dirichlet hold for the whole dwell.
    Held,
}
