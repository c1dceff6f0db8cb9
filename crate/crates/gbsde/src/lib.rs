//! Numerical engine for systems of reflected backward stochastic
//! differential equations under volatility-band uncertainty.
//!
//! The driving noise is known only up to a band `[sigma_lo_sq,
//! sigma_hi_sq]` of quadratic-variation rates; worst-case expectations
//! over that band are characterized by the band envelope
//! `G(a) = (sigma_hi_sq * a^+ - sigma_lo_sq * a^-) / 2` ([`gparams`]).
//! Value functions of reflected backward systems then solve an obstacle
//! problem for a fully nonlinear parabolic operator built from `G`
//! ([`problem`] holds the data, [`obstacle`] the penalized monotone
//! finite-difference solver). A second, independent route to the same
//! object — fixed-point iteration with frozen cross-component coupling —
//! lives in [`picard`] and cross-validates the first.
//!
//! Around the solvers: [`gexp`] evaluates worst-case expectations of
//! multi-time payoffs directly (band heat equation plus cylinder
//! gluing), [`sde`] simulates the forward state under explicit scenario
//! controls and checks displacement moments, [`paths`] rebuilds the
//! backward triple `(Y, Z, A)` along simulated paths, [`compare`] checks
//! order preservation between dominated problem pairs, and [`oracles`]
//! supplies classical closed-form and lattice references for the
//! degenerate-band limit. [`config`] and [`report`] are the declarative
//! TOML/JSON/CSV surface used by the batch CLI.

pub mod coeff;
pub mod compare;
pub mod config;
pub mod error;
pub mod gexp;
pub mod gparams;
pub mod grid;
pub mod obstacle;
pub mod oracles;
pub mod paths;
pub mod picard;
pub mod problem;
mod randn;
pub mod report;
pub mod sde;

pub use coeff::{CoefficientFn, GeneratorFn};
pub use compare::{comparison_check, ComparisonReport};
pub use config::{parse_manifest, parse_problem_toml, ProblemConfig, RunManifest};
pub use error::{Error, Result};
pub use gexp::{
    evaluate_cylinder, solve_g_heat, sup_over_scenarios, CylinderFunctional, CylinderPayoff,
    ScenarioBound,
};
pub use gparams::GParams;
pub use grid::{Grid, ValueField};
pub use obstacle::{
    complementarity_residual, f_operator, refinement_study, solve_obstacle, solve_penalized,
    PenaltySchedule, SolveResult,
};
pub use oracles::{classical_oracle, OracleKind, OracleParams};
pub use paths::{reconstruct_paths, PathSolution};
pub use picard::{picard_global_solve, picard_local_step, PicardConfig, PicardResult};
pub use problem::{validate_problem, ProblemSpec, ValidationReport};
pub use sde::{moment_diagnostics, simulate_gsde, PathEnsemble, ScenarioControl};
