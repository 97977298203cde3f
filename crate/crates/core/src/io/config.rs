//! TOML run configuration.

use serde::{Deserialize, Serialize};

use crate::driver::SimConfig;
use crate::fem::{BoundarySpec, DepositMode, MassKind, MaterialParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub base_level: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voxel_level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    /// Conductivity; with unit `rho` and `cp` this is the diffusivity.
    pub alpha: f64,
    pub rho: f64,
    pub cp: f64,
    pub latent_source: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepositModeName {
    Initial,
    Held,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySection {
    pub bed: f64,
    pub deposit: f64,
    pub ambient: f64,
    pub deposit_mode: DepositModeName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub steps_per_voxel: usize,
    pub dt: f64,
    pub cooldown_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassName {
    Lumped,
    Consistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_iter_factor: usize,
    pub mass: MassName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub snapshot_fractions: Vec<f64>,
    pub snapshot_every: usize,
    /// Also write inactive leaves to snapshots.
    pub include_inactive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridSection,
    pub material: MaterialSection,
    pub boundary: BoundarySection,
    pub schedule: ScheduleSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

impl Default for GridSection {
    fn default() -> Self {
        let d = SimConfig::default();
        GridSection {
            base_level: d.base_level,
            voxel_level: d.voxel_level,
        }
    }
}

impl Default for MaterialSection {
    fn default() -> Self {
        let m = SimConfig::default().material;
        MaterialSection {
            alpha: m.kappa,
            rho: m.rho,
            cp: m.cp,
            latent_source: m.latent_source,
        }
    }
}

impl Default for BoundarySection {
    fn default() -> Self {
        let b = BoundarySpec::default();
        BoundarySection {
            bed: b.t_bed,
            deposit: b.t_deposit,
            ambient: b.t_ambient,
            deposit_mode: DepositModeName::Initial,
        }
    }
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let d = SimConfig::default();
        ScheduleSection {
            steps_per_voxel: d.steps_per_voxel,
            dt: d.dt,
            cooldown_steps: d.cooldown_steps,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SolverSection {
            tolerance: d.tolerance,
            max_iter_factor: d.max_iter_factor,
            mass: MassName::Lumped,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        let d = SimConfig::default();
        OutputSection {
            snapshot_fractions: d.snapshot_fractions,
            snapshot_every: d.snapshot_every,
            include_inactive: false,
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Conductivity is stored as `alpha * rho * cp` so that the diffusivity
    /// equals `alpha`.
    pub fn sim_config(&self) -> SimConfig {
        let m = &self.material;
        SimConfig {
            voxel_level: self.grid.voxel_level,
            base_level: self.grid.base_level,
            steps_per_voxel: self.schedule.steps_per_voxel,
            dt: self.schedule.dt,
            cooldown_steps: self.schedule.cooldown_steps,
            material: MaterialParams {
                kappa: m.alpha * m.rho * m.cp,
                rho: m.rho,
                cp: m.cp,
                latent_source: m.latent_source,
            },
            bcs: BoundarySpec {
                t_bed: self.boundary.bed,
                t_deposit: self.boundary.deposit,
                t_ambient: self.boundary.ambient,
            },
            deposit_mode: match self.boundary.deposit_mode {
                DepositModeName::Initial => DepositMode::Initial,
                DepositModeName::Held => DepositMode::Held,
            },
            mass: match self.solver.mass {
                MassName::Lumped => MassKind::Lumped,
                MassName::Consistent => MassKind::Consistent,
            },
            tolerance: self.solver.tolerance,
            max_iter_factor: self.solver.max_iter_factor,
            snapshot_fractions: self.output.snapshot_fractions.clone(),
            snapshot_every: self.output.snapshot_every,
        }
    }

    pub fn from_sim_config(cfg: &SimConfig, include_inactive: bool) -> Self {
        ConfigFile {
            grid: GridSection {
                base_level: cfg.base_level,
                voxel_level: cfg.voxel_level,
            },
            material: MaterialSection {
                alpha: cfg.material.alpha(),
                rho: cfg.material.rho,
                cp: cfg.material.cp,
                latent_source: cfg.material.latent_source,
            },
            boundary: BoundarySection {
                bed: cfg.bcs.t_bed,
                deposit: cfg.bcs.t_deposit,
                ambient: cfg.bcs.t_ambient,
                deposit_mode: match cfg.deposit_mode {
                    DepositMode::Initial => DepositModeName::Initial,
                    DepositMode::Held => DepositModeName::Held,
                },
            },
            schedule: ScheduleSection {
                steps_per_voxel: cfg.steps_per_voxel,
                dt: cfg.dt,
                cooldown_steps: cfg.cooldown_steps,
            },
            solver: SolverSection {
                tolerance: cfg.tolerance,
                max_iter_factor: cfg.max_iter_factor,
                mass: match cfg.mass {
                    MassKind::Lumped => MassName::Lumped,
                    MassKind::Consistent => MassName::Consistent,
                },
            },
            output: OutputSection {
                snapshot_fractions: cfg.snapshot_fractions.clone(),
                snapshot_every: cfg.snapshot_every,
                include_inactive,
            },
        }
    }
}
