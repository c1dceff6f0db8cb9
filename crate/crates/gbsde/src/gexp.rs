//! Worst-case expectations of path functionals of the driving noise.
//!
//! The upper expectation of a payoff observed at a handful of times is
//! computed by backward recursion on one-dimensional nonlinear heat
//! equations
//!
//! ```text
//! du/dt + G(d2u/dx2) = 0,     u(t_end, .) = terminal,
//! ```
//!
//! stepped explicitly on a monotone stencil ([`solve_g_heat`]). A payoff on
//! two monitoring times is glued: for each lattice state at the earlier
//! time the later sub-interval is solved with the payoff's first slot
//! frozen, and the diagonal of those solutions becomes the terminal data of
//! the outer solve ([`evaluate_cylinder`]).
//!
//! [`sup_over_scenarios`] bounds the same quantity from below by Monte
//! Carlo over a finite family of piecewise-constant variance scenarios:
//! each scenario mean is a classical expectation dominated by the
//! worst-case value, so `max(means) <= value + sampling error` — a cheap
//! two-sided sanity sandwich for the PDE route.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gparams::GParams;
use crate::grid::Grid;
use crate::randn::NormalSource;
use crate::sde::ScenarioControl;

/// Put or call leg of a product payoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LegSide {
    Put,
    Call,
}

/// One leg of a [`CylinderPayoff::ProductLegs`] payoff; leg `i` applies to
/// the `i`-th monitored value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionLeg {
    pub side: LegSide,
    pub strike: f64,
}

impl OptionLeg {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        match self.side {
            LegSide::Put => (self.strike - x).max(0.0),
            LegSide::Call => (x - self.strike).max(0.0),
        }
    }
}

/// Payoff applied to the vector of monitored values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CylinderPayoff {
    /// `<weights, x> + offset`.
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `scale * (x[n-1] - x[n-2])^2`, with the value before the first
    /// monitoring time taken as 0 (so a single time gives `scale * x^2`).
    SquaredIncrement { scale: f64 },
    /// Product of one option leg per monitored value.
    ProductLegs { legs: Vec<OptionLeg> },
    /// Polynomial in the last monitored value, clipped to `[-bound, bound]`
    /// so the payoff stays bounded and Lipschitz.
    ClippedPolynomial { coeffs: Vec<f64>, bound: f64 },
}

impl CylinderPayoff {
    /// Evaluates the payoff on the monitored values.
    pub fn eval(&self, xs: &[f64]) -> f64 {
        match self {
            CylinderPayoff::Linear { weights, offset } => {
                offset + weights.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>()
            }
            CylinderPayoff::SquaredIncrement { scale } => {
                let n = xs.len();
                let prev = if n >= 2 { xs[n - 2] } else { 0.0 };
                let d = xs[n - 1] - prev;
                scale * d * d
            }
            CylinderPayoff::ProductLegs { legs } => {
                legs.iter().zip(xs).map(|(leg, x)| leg.eval(*x)).product()
            }
            CylinderPayoff::ClippedPolynomial { coeffs, bound } => {
                let x = *xs.last().expect("at least one monitored value");
                let v = coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
                v.clamp(-bound, *bound)
            }
        }
    }

    fn validate(&self, n_times: usize) -> Result<()> {
        match self {
            CylinderPayoff::Linear { weights, offset } => {
                if weights.len() != n_times {
                    return Err(Error::Domain(format!(
                        "linear payoff has {} weights for {} times",
                        weights.len(),
                        n_times
                    )));
                }
                if weights.iter().any(|w| !w.is_finite()) || !offset.is_finite() {
                    return Err(Error::Domain("linear payoff: non-finite weight".into()));
                }
                Ok(())
            }
            CylinderPayoff::SquaredIncrement { scale } => {
                if scale.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain("squared-increment payoff: non-finite scale".into()))
                }
            }
            CylinderPayoff::ProductLegs { legs } => {
                if legs.len() != n_times {
                    return Err(Error::Domain(format!(
                        "product payoff has {} legs for {} times",
                        legs.len(),
                        n_times
                    )));
                }
                if legs.iter().any(|l| !l.strike.is_finite()) {
                    return Err(Error::Domain("product payoff: non-finite strike".into()));
                }
                Ok(())
            }
            CylinderPayoff::ClippedPolynomial { coeffs, bound } => {
                if coeffs.is_empty() {
                    return Err(Error::Domain("clipped polynomial needs coefficients".into()));
                }
                if coeffs.iter().any(|c| !c.is_finite()) || !bound.is_finite() || *bound <= 0.0 {
                    return Err(Error::Domain(
                        "clipped polynomial: bad coefficients or bound".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Payoff observed at finitely many strictly increasing times in `(0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderFunctional {
    times: Vec<f64>,
    payoff: CylinderPayoff,
}

impl CylinderFunctional {
    pub fn new(times: Vec<f64>, payoff: CylinderPayoff) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Domain("cylinder functional needs at least one time".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::Domain(
                "monitoring times must be finite and strictly positive".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("monitoring times must be strictly increasing".into()));
        }
        payoff.validate(times.len())?;
        Ok(Self { times, payoff })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn payoff(&self) -> &CylinderPayoff {
        &self.payoff
    }
}

/// Backward solution of the band heat equation on `[t_start, t_end]`:
/// `levels[0]` sits at `t_start`, the last level is the terminal data.
#[derive(Debug, Clone)]
pub struct HeatSolution {
    pub t_start: f64,
    pub t_end: f64,
    /// Actual step used (at most the grid step, so stability is inherited).
    pub dt: f64,
    pub levels: Vec<Vec<f64>>,
}

impl HeatSolution {
    /// Value at `t_start`, interpolated at state `x`.
    pub fn value_at(&self, grid: &Grid, x: f64) -> f64 {
        grid.interp(&self.levels[0], x)
    }
}

/// Explicit monotone march of `du/dt + G(d2u/dx2) = 0` backward from
/// `t_end` to `t_start` on the grid's spatial lattice.
///
/// The second difference is central; at the two edge nodes it is closed
/// with zero (linear extrapolation), which transports nothing because
/// `G(0) = 0`. The number of steps is chosen so the local step never
/// exceeds the grid step, hence the constructor's stability bound applies.
pub fn solve_g_heat(
    terminal: &[f64],
    gp: &GParams,
    t_start: f64,
    t_end: f64,
    grid: &Grid,
) -> Result<HeatSolution> {
    gp.validate()?;
    if terminal.len() != grid.nx() {
        return Err(Error::Domain(format!(
            "terminal slice has {} nodes, grid has {}",
            terminal.len(),
            grid.nx()
        )));
    }
    if let Some(s) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "terminal data not finite at node {s} (x = {})",
            grid.x(s)
        )));
    }
    if !(t_start.is_finite() && t_end.is_finite()) || t_start < 0.0 || t_end <= t_start {
        return Err(Error::Domain(format!(
            "need 0 <= t_start < t_end, got [{t_start}, {t_end}]"
        )));
    }
    let span = t_end - t_start;
    // Round-off guard: when span is an exact multiple of the grid step the
    // ratio must not tip over to the next integer, or the local step would
    // shrink and time levels would stop lining up with the grid's.
    let steps = ((span / grid.dt() - 1e-9).ceil().max(1.0)) as usize;
    let dt = span / steps as f64;
    let dx2 = grid.dx() * grid.dx();
    let nx = grid.nx();

    let mut levels = vec![vec![0.0f64; nx]; steps + 1];
    levels[steps].copy_from_slice(terminal);
    for j in (0..steps).rev() {
        let (lo, hi) = levels.split_at_mut(j + 1);
        let cur = &mut lo[j];
        let prev = &hi[0];
        cur[0] = prev[0];
        cur[nx - 1] = prev[nx - 1];
        for s in 1..nx - 1 {
            let a = (prev[s + 1] - 2.0 * prev[s] + prev[s - 1]) / dx2;
            cur[s] = prev[s] + dt * gp.g(a);
        }
    }
    Ok(HeatSolution {
        t_start,
        t_end,
        dt,
        levels,
    })
}

/// Worst-case expectation of a cylinder functional of the noise started at
/// zero, by backward gluing of one-dimensional solves. Supports one or two
/// monitoring times; more error with [`Error::UnsupportedArity`].
pub fn evaluate_cylinder(func: &CylinderFunctional, gp: &GParams, grid: &Grid) -> Result<f64> {
    let times = func.times();
    if times.len() > 2 {
        return Err(Error::UnsupportedArity(times.len()));
    }
    let horizon = grid.t_horizon();
    if *times.last().unwrap() > horizon + 1e-12 {
        return Err(Error::Domain(format!(
            "monitoring time {} exceeds grid horizon {horizon}",
            times.last().unwrap()
        )));
    }
    let nx = grid.nx();
    match times {
        [t1] => {
            let terminal: Vec<f64> = (0..nx).map(|s| func.payoff().eval(&[grid.x(s)])).collect();
            let sol = solve_g_heat(&terminal, gp, 0.0, *t1, grid)?;
            Ok(sol.value_at(grid, 0.0))
        }
        [t1, t2] => {
            // Inner solves on [t1, t2], one per frozen first coordinate;
            // their diagonal is the terminal data of the outer solve.
            let diag: Result<Vec<f64>> = (0..nx)
                .into_par_iter()
                .map(|a| {
                    let x1 = grid.x(a);
                    let terminal: Vec<f64> =
                        (0..nx).map(|s| func.payoff().eval(&[x1, grid.x(s)])).collect();
                    let inner = solve_g_heat(&terminal, gp, *t1, *t2, grid)?;
                    Ok(inner.levels[0][a])
                })
                .collect();
            let outer = solve_g_heat(&diag?, gp, 0.0, *t1, grid)?;
            Ok(outer.value_at(grid, 0.0))
        }
        _ => unreachable!("constructor guarantees at least one time"),
    }
}

/// Mean and sampling error of one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlStat {
    pub control_id: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Result of [`sup_over_scenarios`]: the best scenario mean and the whole
/// table (ordered by control id).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioBound {
    pub bound: f64,
    pub best_control: usize,
    pub table: Vec<ControlStat>,
}

/// Lower confidence bound on the worst-case expectation by exact Gaussian
/// simulation of the noise under each admissible variance scenario.
///
/// Increments between consecutive event times (monitoring times and
/// scenario breakpoints) are exactly Gaussian, so there is no time
/// discretization error — only sampling noise, reported per control as a
/// standard error. Stream ids encode `(control, path)`, making the table
/// reproducible control by control.
pub fn sup_over_scenarios(
    func: &CylinderFunctional,
    gp: &GParams,
    controls: &[ScenarioControl],
    n_paths: usize,
    seed: u64,
) -> Result<ScenarioBound> {
    gp.validate()?;
    if controls.is_empty() {
        return Err(Error::Control("need at least one scenario".into()));
    }
    if n_paths < 1000 {
        return Err(Error::Control(format!(
            "need at least 1000 paths for a usable standard error, got {n_paths}"
        )));
    }
    let times = func.times();
    for c in controls {
        c.validate_against(gp)?;
        if c.horizon() + 1e-12 < *times.last().unwrap() {
            return Err(Error::Control(format!(
                "scenario horizon {} does not reach the last monitoring time {}",
                c.horizon(),
                times.last().unwrap()
            )));
        }
    }

    // Event times: 0, every scenario breakpoint below the last monitoring
    // time, and the monitoring times themselves.
    let mut table = Vec::with_capacity(controls.len());
    for (cid, control) in controls.iter().enumerate() {
        let mut events: Vec<f64> = vec![0.0];
        events.extend(
            control
                .breakpoints()
                .iter()
                .copied()
                .filter(|t| *t > 0.0 && *t < *times.last().unwrap()),
        );
        events.extend(times.iter().copied());
        events.sort_by(|a, b| a.partial_cmp(b).unwrap());
        events.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

        // Per-segment standard deviations under this scenario.
        let seg_sd: Vec<f64> = events
            .windows(2)
            .map(|w| (control.variance_at(w[0]) * (w[1] - w[0])).sqrt())
            .collect();
        // Which event index each monitoring time sits at.
        let monitor_idx: Vec<usize> = times
            .iter()
            .map(|t| {
                events
                    .iter()
                    .position(|e| (e - t).abs() < 1e-15)
                    .expect("monitoring times are events")
            })
            .collect();

        let samples: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let stream = ((cid as u64) << 32) | p as u64;
                let mut src = NormalSource::for_substream(seed, stream);
                let mut b = 0.0f64;
                let mut monitored = vec![0.0f64; times.len()];
                let mut next_monitor = 0;
                if monitor_idx[0] == 0 {
                    // Degenerate (cannot happen: times > 0), kept for safety.
                    monitored[0] = b;
                    next_monitor = 1;
                }
                for (i, sd) in seg_sd.iter().enumerate() {
                    b += sd * src.next_normal();
                    while next_monitor < times.len() && monitor_idx[next_monitor] == i + 1 {
                        monitored[next_monitor] = b;
                        next_monitor += 1;
                    }
                }
                func.payoff().eval(&monitored)
            })
            .collect();

        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        table.push(ControlStat {
            control_id: cid,
            mean,
            stderr: (var / n).sqrt(),
        });
    }

    let best = table
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.mean.partial_cmp(&b.1.mean).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    Ok(ScenarioBound {
        bound: table[best].mean,
        best_control: table[best].control_id,
        table,
    })
}
