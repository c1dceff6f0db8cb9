//! Declarative problem configuration (TOML in) and run manifests (JSON
//! out/in).
//!
//! A problem file names every coefficient by catalog kind and parameters
//! — no code runs from a config. Unknown keys are rejected everywhere so
//! a typo cannot silently fall back to a default. The manifest embeds the
//! fully resolved configuration (after CLI overrides), the seed, and the
//! package version, so a run can be reproduced from the manifest alone.

use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientFn, GeneratorFn};
use crate::error::{Error, Result};
use crate::gexp::{CylinderFunctional, CylinderPayoff};
use crate::gparams::GParams;
use crate::grid::Grid;
use crate::obstacle::PenaltySchedule;
use crate::picard::PicardConfig;
use crate::problem::ProblemSpec;
use crate::sde::ScenarioControl;

/// Lattice geometry of a problem file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
}

impl GridConfig {
    pub fn build(&self, gp: &GParams, horizon: f64) -> Result<Grid> {
        Grid::new(self.x_min, self.x_max, self.nx, self.nt, horizon, gp)
    }
}

/// State coefficients shared by all components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedCoefficients {
    pub b: CoefficientFn,
    pub h: CoefficientFn,
    pub sigma: CoefficientFn,
}

/// Data of one component of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub f: GeneratorFn,
    pub g: GeneratorFn,
    pub l: CoefficientFn,
    pub l_tilde: CoefficientFn,
    pub phi: CoefficientFn,
}

/// Penalty schedule section: either explicit `levels` or a doubling
/// schedule up to `max_exponent`, plus an optional stop tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub levels: Option<Vec<u32>>,
    #[serde(default)]
    pub max_exponent: Option<u32>,
    #[serde(default)]
    pub stop_tol: Option<f64>,
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> Result<PenaltySchedule> {
        let mut schedule = match (&self.levels, self.max_exponent) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either explicit schedule levels or max_exponent, not both".into(),
                ))
            }
            (Some(levels), None) => PenaltySchedule::new(levels.clone(), None)?,
            (None, Some(e)) => PenaltySchedule::doubling(e),
            (None, None) => PenaltySchedule::default(),
        };
        if let Some(tol) = self.stop_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::Config(format!(
                    "stop_tol must be positive, got {tol}"
                )));
            }
            schedule.stop_tol = Some(tol);
        }
        Ok(schedule)
    }
}

/// Multi-time payoff section for expectation evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderConfig {
    pub times: Vec<f64>,
    pub payoff: CylinderPayoff,
}

impl CylinderConfig {
    pub fn to_functional(&self) -> Result<CylinderFunctional> {
        CylinderFunctional::new(self.times.clone(), self.payoff.clone())
    }
}

/// One piecewise-constant scenario control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl ControlConfig {
    pub fn to_control(&self, horizon: f64) -> Result<ScenarioControl> {
        ScenarioControl::new(self.breakpoints.clone(), self.values.clone(), horizon)
    }
}

fn default_n_paths() -> usize {
    1000
}

/// Monte Carlo knobs for simulation, bounds, and path reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub x0: f64,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Euler steps; `None` means one step per grid level.
    #[serde(default)]
    pub n_steps: Option<usize>,
}

fn default_refine() -> usize {
    3
}

/// Refinement study knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_refine")]
    pub refine: usize,
    /// Where the solution is read at `t = 0`; `None` means the domain
    /// midpoint.
    #[serde(default)]
    pub x_eval: Option<f64>,
    /// Penalty level of the studied march (0 = unreflected).
    #[serde(default)]
    pub penalty: u32,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            refine: default_refine(),
            x_eval: None,
            penalty: 0,
        }
    }
}

/// A full problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Number of components `k`.
    pub components: usize,
    pub horizon: f64,
    /// Declared joint Lipschitz bound of the data.
    pub lipschitz: f64,
    pub band: GParams,
    pub coefficients: SharedCoefficients,
    #[serde(rename = "component")]
    pub component_data: Vec<ComponentConfig>,
    pub grid: GridConfig,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub picard: Option<PicardConfig>,
    #[serde(default)]
    pub cylinder: Option<CylinderConfig>,
    #[serde(default, rename = "controls")]
    pub controls: Vec<ControlConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub study: Option<StudyConfig>,
}

impl ProblemConfig {
    /// Assembles and structurally validates the problem.
    pub fn to_spec(&self) -> Result<ProblemSpec> {
        if self.component_data.len() != self.components {
            return Err(Error::Config(format!(
                "components = {} but {} [[component]] tables given",
                self.components,
                self.component_data.len()
            )));
        }
        let spec = ProblemSpec {
            k: self.components,
            g_params: self.band,
            b: self.coefficients.b.clone(),
            h: self.coefficients.h.clone(),
            sigma: self.coefficients.sigma.clone(),
            f: self.component_data.iter().map(|c| c.f.clone()).collect(),
            g: self.component_data.iter().map(|c| c.g.clone()).collect(),
            l: self.component_data.iter().map(|c| c.l.clone()).collect(),
            l_tilde: self
                .component_data
                .iter()
                .map(|c| c.l_tilde.clone())
                .collect(),
            phi: self.component_data.iter().map(|c| c.phi.clone()).collect(),
            t_horizon: self.horizon,
            lipschitz: self.lipschitz,
        };
        spec.structural_check()?;
        Ok(spec)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        self.grid.build(&self.band, self.horizon)
    }

    pub fn schedule(&self) -> Result<PenaltySchedule> {
        self.schedule
            .clone()
            .unwrap_or_default()
            .to_schedule()
    }

    pub fn scenario_controls(&self) -> Result<Vec<ScenarioControl>> {
        self.controls
            .iter()
            .map(|c| c.to_control(self.horizon))
            .collect()
    }
}

/// Parses a problem file, mapping syntax errors to [`Error::Config`].
pub fn parse_problem_toml(text: &str) -> Result<ProblemConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("problem file: {e}")))
}

/// Version stamp embedded in manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionInfo {
    pub package: String,
}

impl VersionInfo {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Everything needed to reproduce a run: the resolved problem (after any
/// command-line overrides), the command, the seed, and the artifact list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Manifest format version (currently 1).
    pub format: u32,
    pub command: String,
    pub problem: ProblemConfig,
    /// Second problem of an ordered comparison, when applicable.
    #[serde(default)]
    pub problem_lo: Option<ProblemConfig>,
    pub seed: u64,
    /// Time stride of field/ensemble CSV rows, when the command writes one.
    #[serde(default)]
    pub field_stride: Option<usize>,
    /// Index into the scenario-control family, when the command picks one.
    #[serde(default)]
    pub control: Option<usize>,
    /// Artifact file names written by the run, relative to its directory.
    pub outputs: Vec<String>,
    pub versions: VersionInfo,
}

pub const MANIFEST_FORMAT: u32 = 1;

/// Parses a manifest, mapping syntax errors to [`Error::Config`].
pub fn parse_manifest(text: &str) -> Result<RunManifest> {
    let manifest: RunManifest =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::Config(format!(
            "manifest format {} is not supported (expected {MANIFEST_FORMAT})",
            manifest.format
        )));
    }
    Ok(manifest)
}

pub fn manifest_to_json(manifest: &RunManifest) -> Result<String> {
    serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))
}
