//! Forward simulation of the state equation under explicit variance
//! scenarios.
//!
//! Band uncertainty is resolved path by path: an admissible scenario picks
//! a piecewise-constant variance `v(t)` inside `[sigma_lo_sq,
//! sigma_hi_sq]`, under which the noise is an honest Brownian motion with
//! `d<B>_t = v(t) dt`. The state follows the Euler scheme
//!
//! ```text
//! X_{n+1} = X_n + b(X_n) dt + h(X_n) v(t_n) dt + sigma(X_n) dB_n,
//! dB_n ~ Normal(0, v(t_n) dt),
//! ```
//!
//! so the cross-variation drift `h d<B>` and the diffusion share one
//! scenario. [`moment_diagnostics`] estimates the short-horizon
//! displacement moments `E[sup_{s <= delta} |X_s - x0|^2]` over a fixed
//! scenario family and fits their growth order in `delta`, which should
//! sit near 1 for diffusive coefficients and near 2 for pure drift.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gparams::GParams;
use crate::problem::ProblemSpec;
use crate::randn::NormalSource;

/// Piecewise-constant variance scenario: `values[i]` applies on
/// `[breakpoints[i], breakpoints[i+1])`, with `breakpoints[0] = 0` and the
/// last breakpoint read as the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioControl {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl ScenarioControl {
    /// Scenario from interior breakpoints: `values[i]` applies between
    /// consecutive entries of `0, breaks..., horizon`.
    pub fn new(interior_breakpoints: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::Control(format!("horizon must be positive, got {horizon}")));
        }
        if values.len() != interior_breakpoints.len() + 1 {
            return Err(Error::Control(format!(
                "{} segment values for {} interior breakpoints (need one more value)",
                values.len(),
                interior_breakpoints.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Control("segment variances must be positive".into()));
        }
        let mut breakpoints = Vec::with_capacity(interior_breakpoints.len() + 2);
        breakpoints.push(0.0);
        breakpoints.extend(interior_breakpoints);
        breakpoints.push(horizon);
        if breakpoints.iter().any(|t| !t.is_finite())
            || breakpoints.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::Control(
                "breakpoints must be strictly increasing inside (0, horizon)".into(),
            ));
        }
        Ok(Self { breakpoints, values })
    }

    /// Single-segment scenario.
    pub fn constant(variance: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![], vec![variance], horizon)
    }

    /// Two-segment scenario switching at `t_switch`.
    pub fn switch_at(t_switch: f64, before: f64, after: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![t_switch], vec![before, after], horizon)
    }

    /// Interior breakpoints (excludes 0 and the horizon).
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }

    /// Segment variances, one per piece.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Variance in force at time `t` (right-continuous; the last segment
    /// extends past the horizon for boundary-time queries).
    pub fn variance_at(&self, t: f64) -> f64 {
        let mut i = 0;
        while i + 1 < self.values.len() && t >= self.breakpoints[i + 1] {
            i += 1;
        }
        self.values[i]
    }

    /// Checks every segment variance sits inside the band.
    pub fn validate_against(&self, gp: &GParams) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if *v < gp.sigma_lo_sq - 1e-12 || *v > gp.sigma_hi_sq + 1e-12 {
                return Err(Error::Control(format!(
                    "segment {i} variance {v} outside band [{}, {}]",
                    gp.sigma_lo_sq, gp.sigma_hi_sq
                )));
            }
        }
        Ok(())
    }

    /// The canonical scenario family used by the diagnostics: both band
    /// edges and, for a genuine band, a mid-horizon switch from bottom to
    /// top. Degenerate bands admit exactly one scenario.
    pub fn extremes_and_switch(gp: &GParams, horizon: f64) -> Vec<ScenarioControl> {
        let lo = gp.sigma_lo_sq;
        let hi = gp.sigma_hi_sq;
        if hi > lo {
            vec![
                ScenarioControl::constant(lo, horizon).expect("band is validated"),
                ScenarioControl::constant(hi, horizon).expect("band is validated"),
                ScenarioControl::switch_at(0.5 * horizon, lo, hi, horizon)
                    .expect("band is validated"),
            ]
        } else {
            vec![ScenarioControl::constant(hi, horizon).expect("band is validated")]
        }
    }
}

/// Simulated ensemble: `states[p][n]` is path `p` at `times[n]`, and
/// `increments[p][n]` is the noise increment used over `[times[n],
/// times[n+1])` (one fewer entry than states).
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub increments: Vec<Vec<f64>>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.states.len()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Euler ensemble of the state equation under one scenario. Paths are
/// independent substreams of `seed`, so the ensemble is reproducible and
/// independent of thread count.
pub fn simulate_gsde(
    spec: &ProblemSpec,
    x0: f64,
    control: &ScenarioControl,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    spec.structural_check()?;
    control.validate_against(&spec.g_params)?;
    if (control.horizon() - spec.t_horizon).abs() > 1e-12 {
        return Err(Error::Control(format!(
            "scenario horizon {} differs from problem horizon {}",
            control.horizon(),
            spec.t_horizon
        )));
    }
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::Control("need at least one path and one step".into()));
    }
    if !x0.is_finite() {
        return Err(Error::Control(format!("starting state must be finite, got {x0}")));
    }

    let t_horizon = spec.t_horizon;
    let dt = t_horizon / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps)
        .map(|n| if n == n_steps { t_horizon } else { n as f64 * dt })
        .collect();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut src = NormalSource::for_substream(seed, p as u64);
            let mut xs = Vec::with_capacity(n_steps + 1);
            let mut dbs = Vec::with_capacity(n_steps);
            let mut x = x0;
            xs.push(x);
            for n in 0..n_steps {
                let t = times[n];
                let v = control.variance_at(t);
                let db = (v * dt).sqrt() * src.next_normal();
                x += spec.b.eval(t, x) * dt
                    + spec.h.eval(t, x) * v * dt
                    + spec.sigma.eval(t, x) * db;
                xs.push(x);
                dbs.push(db);
            }
            (xs, dbs)
        })
        .collect();

    let mut states = Vec::with_capacity(n_paths);
    let mut increments = Vec::with_capacity(n_paths);
    for (xs, dbs) in rows {
        states.push(xs);
        increments.push(dbs);
    }
    Ok(PathEnsemble {
        times,
        states,
        increments,
    })
}

/// One diagnostic series: second displacement moments of one scenario and
/// starting state over shrinking windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub control_id: usize,
    pub x0: f64,
    /// Window widths, strictly decreasing.
    pub deltas: Vec<f64>,
    /// `moments[i] ~ E[sup over s <= deltas[i] of |X_s - x0|^2]`.
    pub moments: Vec<f64>,
    /// `moments[i] / (1 + x0^2)` — should stay of one magnitude across a
    /// sweep of starting states when the coefficients grow at most
    /// linearly.
    pub ratios: Vec<f64>,
    /// Least-squares slope of `log(moment)` against `log(delta)`.
    pub slope: f64,
}

/// Number of Euler steps inside each diagnostic window.
const MOMENT_STEPS: usize = 64;

/// Short-horizon displacement moments over the canonical scenario family.
///
/// For every scenario, starting state, and window width `delta`, the state
/// is advanced for [`MOMENT_STEPS`] Euler steps on `[0, delta]` and the
/// running maximum of `|X - x0|^2` is averaged over paths. The slope of
/// the fitted log-log line estimates the growth order: 1 for diffusive
/// motion (variance linear in time), 2 for pure drift.
pub fn moment_diagnostics(
    spec: &ProblemSpec,
    x0s: &[f64],
    deltas: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MomentReport>> {
    spec.structural_check()?;
    if deltas.len() < 2 {
        return Err(Error::Control("need at least two window widths to fit a slope".into()));
    }
    if deltas
        .iter()
        .any(|d| !d.is_finite() || *d <= 0.0 || *d > spec.t_horizon)
    {
        return Err(Error::Control("window widths must lie in (0, horizon]".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Control("window widths must be strictly decreasing".into()));
    }
    if x0s.is_empty() || x0s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Control("need at least one finite starting state".into()));
    }
    if x0s.len() > 255 || deltas.len() > 255 {
        return Err(Error::Control("at most 255 starting states and window widths".into()));
    }
    if n_paths < 100 {
        return Err(Error::Control(format!(
            "need at least 100 paths for a stable moment estimate, got {n_paths}"
        )));
    }

    let controls = ScenarioControl::extremes_and_switch(&spec.g_params, spec.t_horizon);
    let mut reports = Vec::new();
    for (cid, control) in controls.iter().enumerate() {
        for (xi, &x0) in x0s.iter().enumerate() {
            let mut moments = Vec::with_capacity(deltas.len());
            for (di, &delta) in deltas.iter().enumerate() {
                let dt = delta / MOMENT_STEPS as f64;
                let total: f64 = (0..n_paths)
                    .into_par_iter()
                    .map(|p| {
                        // Substream id encodes (control, x0, delta, path) so
                        // every cell of the table is independently
                        // reproducible.
                        let stream = ((cid as u64) << 56)
                            | ((xi as u64) << 48)
                            | ((di as u64) << 40)
                            | p as u64;
                        let mut src = NormalSource::for_substream(seed, stream);
                        let mut x = x0;
                        let mut worst = 0.0f64;
                        for n in 0..MOMENT_STEPS {
                            let t = n as f64 * dt;
                            let v = control.variance_at(t);
                            let db = (v * dt).sqrt() * src.next_normal();
                            x += spec.b.eval(t, x) * dt
                                + spec.h.eval(t, x) * v * dt
                                + spec.sigma.eval(t, x) * db;
                            let disp = (x - x0) * (x - x0);
                            if disp > worst {
                                worst = disp;
                            }
                        }
                        worst
                    })
                    .sum();
                moments.push(total / n_paths as f64);
            }
            let ratios: Vec<f64> = moments.iter().map(|m| m / (1.0 + x0 * x0)).collect();
            let slope = log_log_slope(deltas, &moments);
            reports.push(MomentReport {
                control_id: cid,
                x0,
                deltas: deltas.to_vec(),
                moments,
                ratios,
                slope,
            });
        }
    }
    Ok(reports)
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let var = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{CoefficientFn, GeneratorFn};

    fn band() -> GParams {
        GParams::new(1.0, 4.0).unwrap()
    }

    fn plain_spec() -> ProblemSpec {
        ProblemSpec {
            k: 1,
            g_params: band(),
            b: CoefficientFn::constant(0.0),
            h: CoefficientFn::constant(0.0),
            sigma: CoefficientFn::constant(1.0),
            f: vec![GeneratorFn::Zero],
            g: vec![GeneratorFn::Zero],
            l: vec![CoefficientFn::constant(-10.0)],
            l_tilde: vec![CoefficientFn::constant(10.0)],
            phi: vec![CoefficientFn::put(1.0)],
            t_horizon: 1.0,
            lipschitz: 2.0,
        }
    }

    #[test]
    fn scenario_lookup_is_piecewise_constant() {
        let c = ScenarioControl::switch_at(0.5, 1.0, 4.0, 1.0).unwrap();
        assert_eq!(c.variance_at(0.0), 1.0);
        assert_eq!(c.variance_at(0.4999), 1.0);
        assert_eq!(c.variance_at(0.5), 4.0);
        assert_eq!(c.variance_at(1.0), 4.0);
        assert_eq!(c.breakpoints(), &[0.5]);
        assert_eq!(c.horizon(), 1.0);
    }

    #[test]
    fn scenario_construction_rejects_garbage() {
        assert!(ScenarioControl::new(vec![0.5], vec![1.0], 1.0).is_err());
        assert!(ScenarioControl::new(vec![], vec![-1.0], 1.0).is_err());
        assert!(ScenarioControl::new(vec![0.7, 0.3], vec![1.0, 2.0, 3.0], 1.0).is_err());
        assert!(ScenarioControl::new(vec![1.5], vec![1.0, 2.0], 1.0).is_err());
        assert!(ScenarioControl::constant(1.0, 0.0).is_err());
    }

    #[test]
    fn scenario_band_check() {
        let gp = band();
        assert!(ScenarioControl::constant(2.0, 1.0).unwrap().validate_against(&gp).is_ok());
        assert!(ScenarioControl::constant(9.0, 1.0).unwrap().validate_against(&gp).is_err());
        assert!(ScenarioControl::constant(0.5, 1.0).unwrap().validate_against(&gp).is_err());
    }

    #[test]
    fn degenerate_band_has_one_scenario() {
        let gp = GParams::new(2.0, 2.0).unwrap();
        let fam = ScenarioControl::extremes_and_switch(&gp, 1.0);
        assert_eq!(fam.len(), 1);
        assert_eq!(fam[0].variance_at(0.3), 2.0);
        assert_eq!(ScenarioControl::extremes_and_switch(&band(), 1.0).len(), 3);
    }

    #[test]
    fn ensemble_is_reproducible_and_thread_independent() {
        let spec = plain_spec();
        let c = ScenarioControl::constant(4.0, 1.0).unwrap();
        let a = simulate_gsde(&spec, 0.0, &c, 64, 32, 99).unwrap();
        let b = simulate_gsde(&spec, 0.0, &c, 64, 32, 99).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.increments, b.increments);
        // Growing the ensemble keeps earlier paths bit-identical.
        let wider = simulate_gsde(&spec, 0.0, &c, 128, 32, 99).unwrap();
        assert_eq!(&wider.states[..64], &a.states[..]);
    }

    #[test]
    fn constant_drift_without_noise_is_exact() {
        let mut spec = plain_spec();
        spec.b = CoefficientFn::constant(1.0);
        spec.sigma = CoefficientFn::constant(0.0);
        let c = ScenarioControl::constant(1.0, 1.0).unwrap();
        let ens = simulate_gsde(&spec, 0.0, &c, 4, 16, 3).unwrap();
        for path in &ens.states {
            assert!((path.last().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_variance_tracks_the_scenario() {
        // Pure noise: Var X_T = integral of v over [0, T].
        let spec = plain_spec();
        let n = 40_000;
        for (c, want) in [
            (ScenarioControl::constant(1.0, 1.0).unwrap(), 1.0),
            (ScenarioControl::constant(4.0, 1.0).unwrap(), 4.0),
            (ScenarioControl::switch_at(0.5, 1.0, 4.0, 1.0).unwrap(), 2.5),
        ] {
            let ens = simulate_gsde(&spec, 0.0, &c, n, 64, 1234).unwrap();
            let last: Vec<f64> = ens.states.iter().map(|p| *p.last().unwrap()).collect();
            let mean = last.iter().sum::<f64>() / n as f64;
            let var = last.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            assert!(
                (var - want).abs() < 0.05 * want + 0.05,
                "scenario variance {want}: sample {var}"
            );
            assert!(mean.abs() < 0.05, "mean {mean}");
        }
    }

    #[test]
    fn driftless_linear_diffusion_keeps_its_mean() {
        let mut spec = plain_spec();
        spec.sigma = CoefficientFn::geometric(1.0);
        let c = ScenarioControl::constant(1.0, 1.0).unwrap();
        let n = 40_000;
        let ens = simulate_gsde(&spec, 1.0, &c, n, 64, 21).unwrap();
        let last: Vec<f64> = ens.states.iter().map(|p| *p.last().unwrap()).collect();
        let mean = last.iter().sum::<f64>() / n as f64;
        let var = last.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let stderr = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * stderr, "mean {mean}, stderr {stderr}");
    }

    #[test]
    fn cross_variation_drift_moves_the_mean() {
        // b = 0, h = 1: E X_T = v * T exactly under a constant scenario.
        let mut spec = plain_spec();
        spec.h = CoefficientFn::constant(1.0);
        let c = ScenarioControl::constant(4.0, 1.0).unwrap();
        let ens = simulate_gsde(&spec, 0.0, &c, 40_000, 64, 5).unwrap();
        let mean = ens.states.iter().map(|p| *p.last().unwrap()).sum::<f64>() / 40_000.0;
        assert!((mean - 4.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn mismatched_horizon_is_rejected() {
        let spec = plain_spec();
        let c = ScenarioControl::constant(4.0, 2.0).unwrap();
        assert!(matches!(
            simulate_gsde(&spec, 0.0, &c, 8, 8, 0),
            Err(Error::Control(_))
        ));
    }

    #[test]
    fn brownian_displacement_moment_grows_linearly() {
        let spec = plain_spec();
        let reports =
            moment_diagnostics(&spec, &[0.0], &[0.4, 0.2, 0.1, 0.05], 4000, 77).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(
                (r.slope - 1.0).abs() < 0.15,
                "control {} slope {} moments {:?}",
                r.control_id,
                r.slope,
                r.moments
            );
        }
    }

    #[test]
    fn pure_drift_displacement_moment_is_quadratic() {
        let mut spec = plain_spec();
        spec.b = CoefficientFn::constant(1.0);
        spec.sigma = CoefficientFn::constant(0.0);
        let deltas = [0.4, 0.2, 0.1];
        let reports = moment_diagnostics(&spec, &[0.0], &deltas, 100, 0).unwrap();
        for r in &reports {
            for (d, m) in deltas.iter().zip(&r.moments) {
                assert!((m - d * d).abs() < 1e-12, "window {d}: moment {m}");
            }
            assert!((r.slope - 2.0).abs() < 1e-9, "slope {}", r.slope);
        }
    }

    #[test]
    fn displacement_ratio_is_flat_across_a_state_sweep() {
        // Affine diffusion grows with the state, so moment/(1+x0^2) stays of
        // one magnitude between x0 = 0 and x0 = 10.
        let mut spec = plain_spec();
        spec.sigma = CoefficientFn::affine(1.0, 1.0);
        spec.lipschitz = 2.0;
        let reports = moment_diagnostics(&spec, &[0.0, 10.0], &[0.1, 0.05], 4000, 9).unwrap();
        let n_controls = reports.iter().map(|r| r.control_id).max().unwrap() + 1;
        for cid in 0..n_controls {
            for di in 0..2 {
                let cell: Vec<f64> = reports
                    .iter()
                    .filter(|r| r.control_id == cid)
                    .map(|r| r.ratios[di])
                    .collect();
                let lo = cell.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = cell.iter().cloned().fold(0.0f64, f64::max);
                assert!(
                    hi / lo <= 3.0,
                    "control {cid}, window {di}: ratios {cell:?}"
                );
            }
        }
    }

    #[test]
    fn diagnostics_reject_thin_configurations() {
        let spec = plain_spec();
        assert!(moment_diagnostics(&spec, &[0.0], &[0.1], 2000, 0).is_err());
        assert!(moment_diagnostics(&spec, &[], &[0.1, 0.05], 2000, 0).is_err());
        assert!(moment_diagnostics(&spec, &[0.0], &[0.05, 0.1], 2000, 0).is_err());
        assert!(moment_diagnostics(&spec, &[0.0], &[0.1, 0.05], 10, 0).is_err());
    }
}
