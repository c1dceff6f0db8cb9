//! Ordered-pair comparison: when two problems share a forward equation
//! and their data are ordered — drivers monotone-dominating off the
//! diagonal (condition (i), declared by the caller), terminal payoffs
//! ordered (condition (ii)), obstacles ordered (condition (iii)) — the
//! solutions must be ordered too. [`comparison_check`] verifies (ii) and
//! (iii) by dense sampling, refuses to solve when they fail, then solves
//! both problems and reports the worst ordering violation of the computed
//! fields.
//!
//! Condition (i) concerns the joint monotonicity of the drivers in the
//! off-diagonal components and is not machine-checkable from point
//! samples alone; the caller declares it, and the declaration is recorded
//! in the report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::obstacle::{solve_obstacle, PenaltySchedule};
use crate::problem::ProblemSpec;

/// Outcome of a [`comparison_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Smallest `u_hi - u_lo` over all components, levels, and nodes.
    pub min_gap: f64,
    /// Largest `u_hi - u_lo` (useful for two-sided sandwich arguments).
    pub max_gap: f64,
    /// Ordering tolerance: ten times the larger stop tolerance.
    pub tol: f64,
    /// `min_gap >= -tol`.
    pub ordered: bool,
    /// `max(0, -min_gap)` — how badly ordering failed, zero when it held.
    pub worst_violation: f64,
    pub hi_converged: bool,
    pub lo_converged: bool,
}

fn sample_points(grid: &Grid) -> Vec<f64> {
    // Nodes plus midpoints: dense enough to catch any catalog coefficient
    // crossing, since all of them are piecewise smooth with at most one
    // kink.
    let mut pts = Vec::with_capacity(2 * grid.nx());
    for s in 0..grid.nx() {
        pts.push(grid.x(s));
        if s + 1 < grid.nx() {
            pts.push(grid.x(s) + 0.5 * grid.dx());
        }
    }
    pts
}

fn check_shared_forward_equation(
    hi: &ProblemSpec,
    lo: &ProblemSpec,
    pts: &[f64],
) -> Result<()> {
    if hi.k != lo.k {
        return Err(Error::Validation(format!(
            "ordered pair must have the same number of components, got {} and {}",
            hi.k, lo.k
        )));
    }
    if (hi.t_horizon - lo.t_horizon).abs() > 1e-12 {
        return Err(Error::Validation(
            "ordered pair must share the time horizon".into(),
        ));
    }
    if hi.g_params != lo.g_params {
        return Err(Error::Validation(
            "ordered pair must share the volatility band".into(),
        ));
    }
    for &x in pts {
        let same = (hi.b.eval(0.0, x) - lo.b.eval(0.0, x)).abs() <= 1e-12
            && (hi.h.eval(0.0, x) - lo.h.eval(0.0, x)).abs() <= 1e-12
            && (hi.sigma.eval(0.0, x) - lo.sigma.eval(0.0, x)).abs() <= 1e-12;
        if !same {
            return Err(Error::Validation(format!(
                "ordered pair must share the forward equation, but the state \
                 coefficients differ at x = {x}"
            )));
        }
    }
    Ok(())
}

/// Verifies the sampled ordering conditions, solves both problems with
/// the same schedule, and reports the ordering of the computed fields
/// against `10 * stop_tol`.
///
/// `spec_hi` is the side declared larger. Errors with the violated
/// condition named — "condition (ii)" for terminal data, "condition
/// (iii)" for obstacles — without running either solver.
pub fn comparison_check(
    spec_hi: &ProblemSpec,
    spec_lo: &ProblemSpec,
    grid: &Grid,
    schedule: &PenaltySchedule,
) -> Result<ComparisonReport> {
    spec_hi.structural_check()?;
    spec_lo.structural_check()?;
    let pts = sample_points(grid);
    check_shared_forward_equation(spec_hi, spec_lo, &pts)?;

    let t_end = spec_hi.t_horizon;
    for i in 0..spec_hi.k {
        for &x in &pts {
            let hi = spec_hi.phi[i].eval(t_end, x);
            let lo = spec_lo.phi[i].eval(t_end, x);
            if hi < lo - 1e-12 * (1.0 + lo.abs()) {
                return Err(Error::Validation(format!(
                    "condition (ii) fails: terminal data of component {} are not \
                     ordered at x = {x} ({hi} < {lo})",
                    i + 1
                )));
            }
        }
    }
    for i in 0..spec_hi.k {
        for &x in &pts {
            let hi = spec_hi.l[i].eval(0.0, x);
            let lo = spec_lo.l[i].eval(0.0, x);
            if hi < lo - 1e-12 * (1.0 + lo.abs()) {
                return Err(Error::Validation(format!(
                    "condition (iii) fails: obstacles of component {} are not \
                     ordered at x = {x} ({hi} < {lo})",
                    i + 1
                )));
            }
        }
    }

    let hi = solve_obstacle(spec_hi, grid, schedule)?;
    let lo = solve_obstacle(spec_lo, grid, schedule)?;
    let tol = 10.0 * hi.stop_tol.max(lo.stop_tol);

    let mut min_gap = f64::INFINITY;
    let mut max_gap = f64::NEG_INFINITY;
    for i in 0..spec_hi.k {
        for j in 0..=grid.nt() {
            for s in 0..grid.nx() {
                let gap = hi.field.at(i, j, s) - lo.field.at(i, j, s);
                min_gap = min_gap.min(gap);
                max_gap = max_gap.max(gap);
            }
        }
    }
    Ok(ComparisonReport {
        min_gap,
        max_gap,
        tol,
        ordered: min_gap >= -tol,
        worst_violation: (-min_gap).max(0.0),
        hi_converged: hi.converged,
        lo_converged: lo.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{CoefficientFn, GeneratorFn};
    use crate::gparams::GParams;

    fn put_spec() -> ProblemSpec {
        ProblemSpec {
            k: 1,
            g_params: GParams::new(1.0, 1.0).unwrap(),
            b: CoefficientFn::constant(0.0),
            h: CoefficientFn::constant(0.0),
            sigma: CoefficientFn::geometric(0.2),
            f: vec![GeneratorFn::linear_in_y(vec![-0.1])],
            g: vec![GeneratorFn::Zero],
            l: vec![CoefficientFn::put(1.0)],
            l_tilde: vec![CoefficientFn::constant(1.0)],
            phi: vec![CoefficientFn::put(1.0)],
            t_horizon: 1.0,
            lipschitz: 2.0,
        }
    }

    fn grid_for(spec: &ProblemSpec) -> Grid {
        Grid::new(0.0, 4.0, 101, 1250, spec.t_horizon, &spec.g_params).unwrap()
    }

    #[test]
    fn identical_specs_are_equal() {
        let spec = put_spec();
        let grid = grid_for(&spec);
        let report =
            comparison_check(&spec, &spec, &grid, &PenaltySchedule::doubling(6)).unwrap();
        assert!(report.ordered);
        assert!(report.min_gap.abs() < 1e-12);
        assert!(report.max_gap.abs() < 1e-12);
    }

    #[test]
    fn shifted_terminal_orders_the_solutions_within_the_shift() {
        let hi = put_spec();
        let mut lo = put_spec();
        lo.phi = vec![CoefficientFn::put_shifted(1.0, -0.1)];
        lo.l = vec![CoefficientFn::put_shifted(1.0, -0.1)];
        lo.l_tilde = vec![CoefficientFn::constant(1.0)];
        let grid = grid_for(&hi);
        let report = comparison_check(&hi, &lo, &grid, &PenaltySchedule::doubling(8)).unwrap();
        assert!(report.ordered, "violation {}", report.worst_violation);
        // Two-sided sandwich: the data differ by 0.1, so the solutions
        // cannot differ by more than the shift plus tolerance.
        assert!(
            report.max_gap <= 0.1 + report.tol,
            "max gap {}",
            report.max_gap
        );
    }

    #[test]
    fn lowered_obstacle_alone_keeps_the_ordering() {
        let hi = put_spec();
        let mut lo = put_spec();
        lo.l = vec![CoefficientFn::put_shifted(1.0, -0.1)];
        let grid = grid_for(&hi);
        let report = comparison_check(&hi, &lo, &grid, &PenaltySchedule::doubling(8)).unwrap();
        assert!(report.ordered, "violation {}", report.worst_violation);
    }

    #[test]
    fn misordered_terminal_is_rejected_by_name() {
        let hi = put_spec();
        let mut lo = put_spec();
        lo.phi = vec![CoefficientFn::put_shifted(1.0, 0.1)];
        lo.l_tilde = vec![CoefficientFn::constant(1.2)];
        let grid = grid_for(&hi);
        match comparison_check(&hi, &lo, &grid, &PenaltySchedule::doubling(4)) {
            Err(Error::Validation(msg)) => {
                assert!(msg.contains("condition (ii)"), "{msg}")
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn misordered_obstacle_is_rejected_by_name() {
        let hi = put_spec();
        let mut lo = put_spec();
        lo.l = vec![CoefficientFn::put_shifted(1.0, 0.05)];
        lo.l_tilde = vec![CoefficientFn::constant(1.1)];
        let grid = grid_for(&hi);
        match comparison_check(&hi, &lo, &grid, &PenaltySchedule::doubling(4)) {
            Err(Error::Validation(msg)) => {
                assert!(msg.contains("condition (iii)"), "{msg}")
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn different_forward_equations_are_rejected() {
        let hi = put_spec();
        let mut lo = put_spec();
        lo.sigma = CoefficientFn::geometric(0.25);
        let grid = grid_for(&hi);
        match comparison_check(&hi, &lo, &grid, &PenaltySchedule::doubling(4)) {
            Err(Error::Validation(msg)) => {
                assert!(msg.contains("forward equation"), "{msg}")
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }
}
