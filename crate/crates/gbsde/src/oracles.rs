//! Independent closed-form and lattice references used to cross-check the
//! finite-difference solvers.
//!
//! Everything here is deliberately computed by a different route than the
//! solvers under test: the European prices go through the Gaussian CDF,
//! the American price through a binomial lattice, the arithmetic put
//! through direct convolution. None of them touch the band machinery.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gexp::LegSide;

fn check_vol_and_time(sigma: f64, t: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("volatility must be positive, got {sigma}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("maturity must be positive, got {t}")));
    }
    Ok(())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Zero-rate Black-Scholes European put on a geometric diffusion
/// `dX = sigma X dW`, spot `x0 > 0`, strike `k > 0`:
/// `k*Phi(-d2) - x0*Phi(-d1)`.
pub fn bs_european_put(x0: f64, k: f64, sigma: f64, t: f64) -> Result<f64> {
    check_vol_and_time(sigma, t)?;
    if !(x0 > 0.0 && k > 0.0) {
        return Err(Error::Domain(format!(
            "spot and strike must be positive, got x0 = {x0}, k = {k}"
        )));
    }
    let n = std_normal();
    let sq = sigma * t.sqrt();
    let d1 = ((x0 / k).ln() + 0.5 * sigma * sigma * t) / sq;
    let d2 = d1 - sq;
    Ok(k * n.cdf(-d2) - x0 * n.cdf(-d1))
}

/// Zero-rate Black-Scholes European call via put-call parity at zero rate:
/// `call = put + x0 - k`.
pub fn bs_european_call(x0: f64, k: f64, sigma: f64, t: f64) -> Result<f64> {
    Ok(bs_european_put(x0, k, sigma, t)? + x0 - k)
}

/// Arithmetic-Brownian (Bachelier) put at zero rate on `X = x0 + sigma W`:
/// `(k - x0)*Phi(d) + sigma*sqrt(t)*pdf(d)` with `d = (k - x0)/(sigma sqrt t)`.
pub fn bachelier_put(x0: f64, k: f64, sigma_sq_t: f64) -> Result<f64> {
    if !(sigma_sq_t.is_finite() && sigma_sq_t > 0.0) {
        return Err(Error::Domain(format!(
            "variance over the horizon must be positive, got {sigma_sq_t}"
        )));
    }
    if !(x0.is_finite() && k.is_finite()) {
        return Err(Error::Domain("spot and strike must be finite".into()));
    }
    let sd = sigma_sq_t.sqrt();
    let d = (k - x0) / sd;
    let n = std_normal();
    let pdf = (-0.5 * d * d).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok((k - x0) * n.cdf(d) + sd * pdf)
}

/// American put at zero rate on a geometric diffusion, by a
/// Cox-Ross-Rubinstein lattice with `n_steps` periods.
///
/// At zero rate the measure weights are `p = (1 - d)/(u - d)` with
/// `u = exp(sigma sqrt(dt))`, `d = 1/u`, and the backward value is
/// `max(payoff, p*up + (1-p)*down)`.
pub fn binomial_american_put(x0: f64, k: f64, sigma: f64, t: f64, n_steps: usize) -> Result<f64> {
    check_vol_and_time(sigma, t)?;
    if !(x0 > 0.0 && k > 0.0) {
        return Err(Error::Domain(format!(
            "spot and strike must be positive, got x0 = {x0}, k = {k}"
        )));
    }
    if n_steps == 0 {
        return Err(Error::Domain("lattice needs at least one period".into()));
    }
    let dt = t / n_steps as f64;
    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let p = (1.0 - d) / (u - d);

    // Terminal layer: node i has i up-moves.
    let mut values: Vec<f64> = (0..=n_steps)
        .map(|i| {
            let x = x0 * u.powi(i as i32) * d.powi((n_steps - i) as i32);
            (k - x).max(0.0)
        })
        .collect();
    for step in (0..n_steps).rev() {
        for i in 0..=step {
            let x = x0 * u.powi(i as i32) * d.powi((step - i) as i32);
            let cont = p * values[i + 1] + (1.0 - p) * values[i];
            values[i] = cont.max(k - x).max(0.0);
        }
        values.truncate(step + 1);
    }
    Ok(values[0])
}

/// Which reference model a [`classical_oracle`] call evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Cox-Ross-Rubinstein lattice for the early-exercise value.
    BinomialAmerican,
    /// Closed-form zero-rate European value.
    BsEuropean,
}

/// Parameters shared by the classical reference models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub side: LegSide,
    pub spot: f64,
    pub strike: f64,
    pub sigma: f64,
    pub maturity: f64,
    /// Lattice periods for the binomial oracle; `None` means 2000.
    #[serde(default)]
    pub steps: Option<usize>,
}

/// Single entry point for the classical reference values used to check
/// the solver in the degenerate-band limit.
pub fn classical_oracle(kind: OracleKind, params: &OracleParams) -> Result<f64> {
    let OracleParams {
        side,
        spot,
        strike,
        sigma,
        maturity,
        steps,
    } = *params;
    match (kind, side) {
        (OracleKind::BsEuropean, LegSide::Put) => bs_european_put(spot, strike, sigma, maturity),
        (OracleKind::BsEuropean, LegSide::Call) => bs_european_call(spot, strike, sigma, maturity),
        (OracleKind::BinomialAmerican, LegSide::Put) => {
            binomial_american_put(spot, strike, sigma, maturity, steps.unwrap_or(2000))
        }
        (OracleKind::BinomialAmerican, LegSide::Call) => Err(Error::Domain(
            "the lattice oracle covers puts only; at zero rate the American call \
             has no early-exercise premium, so use the European closed form"
                .into(),
        )),
    }
}
