//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use geopref::simulate::{SeedGraph, SeedLocations, SimConfig, MAX_CONTINUOUS_STEPS};
use geopref::space::Density;
use geopref::{
    discretize, ContinuousSpaceSpec, DensityShape, DiscretizedSpace, Domain, FiniteLocationSpace,
    Kernel,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub space: Option<SpaceConfig>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub fitness: Option<FitnessSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceConfig {
    Finite {
        mu: Vec<f64>,
        kernel: Vec<Vec<f64>>,
    },
    TwoPoint {
        p: f64,
        a: f64,
    },
    /// `density` and `kernel` use the catalogue syntax, e.g.
    /// `"cosine(0.5)"` and `"exp_decay(1)"`.
    Continuous {
        domain: Domain,
        density: String,
        kernel: String,
        n_cells: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub m: u32,
    pub steps: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_stride")]
    pub trajectory_stride: u64,
    #[serde(default)]
    pub seed_graph: SeedGraph,
    #[serde(default)]
    pub seed_locations: SeedLocations,
}

fn default_stride() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Upper end of the degree window for total variation.
    #[serde(default = "default_d_max")]
    pub d_max: u64,
    /// Cell subsets (1-based) whose `δ_n` is checked against the bracket.
    #[serde(default)]
    pub cell_subsets: Vec<Vec<usize>>,
    /// Largest degree at which degree CDFs are bracketed.
    #[serde(default = "default_cdf_d_max")]
    pub cdf_d_max: u64,
    /// Cells with fewer vertices are not bracketed.
    #[serde(default = "default_min_cell_vertices")]
    pub min_cell_vertices: u64,
    /// Widening of the fitness range used for the CDF bracket.
    #[serde(default = "default_widen")]
    pub phi_widen: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_d_max() -> u64 {
    50
}
fn default_cdf_d_max() -> u64 {
    30
}
fn default_min_cell_vertices() -> u64 {
    500
}
fn default_widen() -> f64 {
    0.05
}
fn default_tol() -> f64 {
    geopref::equilibrium::DEFAULT_TOL
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            d_max: default_d_max(),
            cell_subsets: Vec::new(),
            cdf_d_max: default_cdf_d_max(),
            min_cell_vertices: default_min_cell_vertices(),
            phi_widen: default_widen(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitnessSection {
    /// Catalogue density on `[0, h]`.
    pub density: String,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Lower end of the truncated support for the cross-check.
    #[serde(default)]
    pub truncate: Option<f64>,
    #[serde(default = "default_fitness_cells")]
    pub n_cells: usize,
    #[serde(default = "default_cross_tol")]
    pub cross_check_tol: f64,
}

fn default_h() -> f64 {
    1.0
}
fn default_fitness_cells() -> usize {
    100
}
fn default_cross_tol() -> f64 {
    0.02
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Any of `"json"`, `"csv"`; both when empty.
    #[serde(default)]
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.is_empty() || self.formats.contains(&f)
    }
}

/// A space section resolved into library objects.
pub enum Space {
    Finite(FiniteLocationSpace),
    Continuous {
        spec: ContinuousSpaceSpec,
        dspace: DiscretizedSpace,
    },
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_owned(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn space(&self) -> Result<&SpaceConfig, CliError> {
        self.space
            .as_ref()
            .ok_or_else(|| CliError::Config("missing key `space`".into()))
    }

    pub fn sim(&self) -> Result<&SimSection, CliError> {
        self.sim
            .as_ref()
            .ok_or_else(|| CliError::Config("missing key `sim`".into()))
    }

    pub fn fitness(&self) -> Result<&FitnessSection, CliError> {
        self.fitness
            .as_ref()
            .ok_or_else(|| CliError::Config("missing key `fitness`".into()))
    }
}

impl SpaceConfig {
    pub fn build(&self) -> Result<Space, CliError> {
        let at = |e: geopref::Error| CliError::Config(format!("space: {e}"));
        Ok(match self {
            SpaceConfig::Finite { mu, kernel } => {
                Space::Finite(FiniteLocationSpace::new(mu.clone(), kernel.clone()).map_err(at)?)
            }
            SpaceConfig::TwoPoint { p, a } => {
                Space::Finite(FiniteLocationSpace::two_point(*p, *a).map_err(at)?)
            }
            SpaceConfig::Continuous { domain, density, kernel, n_cells } => {
                let shape: DensityShape = density.parse().map_err(at)?;
                let kernel: Kernel = kernel.parse().map_err(at)?;
                let spec = ContinuousSpaceSpec::new(*domain, shape, kernel).map_err(at)?;
                if *n_cells == 0 {
                    return Err(CliError::Config("space.n_cells must be positive".into()));
                }
                let dspace = discretize(&spec, *n_cells).map_err(at)?;
                Space::Continuous { spec, dspace }
            }
        })
    }
}

impl SimSection {
    /// Library configuration for one seed; validated.
    pub fn for_seed(&self, seed: u64) -> Result<SimConfig, CliError> {
        let cfg = SimConfig {
            m: self.m,
            steps: self.steps,
            seed,
            seed_graph: self.seed_graph.clone(),
            seed_locations: self.seed_locations.clone(),
            record_trajectory_every: self.trajectory_stride,
            keep_edges: false,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("sim: {e}")))?;
        Ok(cfg)
    }

    pub fn check_continuous_cap(&self) -> Result<(), CliError> {
        if self.steps > MAX_CONTINUOUS_STEPS {
            return Err(CliError::Config(format!(
                "sim.steps = {} exceeds the continuous-space limit of {MAX_CONTINUOUS_STEPS}",
                self.steps
            )));
        }
        Ok(())
    }
}

impl FitnessSection {
    pub fn density(&self) -> Result<Density, CliError> {
        let shape: DensityShape = self
            .density
            .parse()
            .map_err(|e| CliError::Config(format!("fitness.density: {e}")))?;
        Density::new(shape, 0.0, self.h).map_err(|e| CliError::Config(format!("fitness: {e}")))
    }
}
