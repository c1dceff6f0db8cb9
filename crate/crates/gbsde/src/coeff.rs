//! Closed catalogs of coefficient and driver functions.
//!
//! Problems are assembled from small parametric families instead of
//! arbitrary closures so that configs stay declarative, Lipschitz constants
//! stay computable, and every run is reproducible from its manifest.
//!
//! [`CoefficientFn`] covers the scalar state functions (drift, quadratic
//! drift, diffusion, obstacles, terminal payoffs). [`GeneratorFn`] covers
//! the drivers `f^i` and `g^i`; their `z` argument is the component's own
//! diffusion coefficient, so the diagonal dependence the solvers rely on is
//! enforced by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar function of `(t, x)` drawn from a closed catalog.
///
/// Every current kind is constant in `t`; the time argument is part of the
/// contract so the catalog can grow without touching call sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientFn {
    /// `params = [c]`: the constant `c`.
    Constant { params: Vec<f64> },
    /// `params = [a, c]`: `a*x + c`.
    Affine { params: Vec<f64> },
    /// `params = [a]`: `a*x`, the proportional (geometric) coefficient.
    GeometricLinear { params: Vec<f64> },
    /// `params = [c0, c1, ...]`: `c0 + c1*x + c2*x^2 + ...`; only Lipschitz
    /// on a truncated domain, which is where the solvers live anyway.
    Polynomial { params: Vec<f64> },
    /// `params = [k]` or `[k, scale, offset]`: `scale*(k - x)^+ + offset`
    /// (`scale` defaults to 1, `offset` to 0).
    PutPayoff { params: Vec<f64> },
    /// `params = [k]` or `[k, scale, offset]`: `scale*(x - k)^+ + offset`.
    CallPayoff { params: Vec<f64> },
}

impl CoefficientFn {
    pub fn constant(c: f64) -> Self {
        CoefficientFn::Constant { params: vec![c] }
    }

    pub fn affine(a: f64, c: f64) -> Self {
        CoefficientFn::Affine { params: vec![a, c] }
    }

    pub fn geometric(a: f64) -> Self {
        CoefficientFn::GeometricLinear { params: vec![a] }
    }

    pub fn put(strike: f64) -> Self {
        CoefficientFn::PutPayoff {
            params: vec![strike],
        }
    }

    pub fn call(strike: f64) -> Self {
        CoefficientFn::CallPayoff {
            params: vec![strike],
        }
    }

    /// Shifted put `(k - x)^+ + offset`; handy for ordered comparison pairs.
    pub fn put_shifted(strike: f64, offset: f64) -> Self {
        CoefficientFn::PutPayoff {
            params: vec![strike, 1.0, offset],
        }
    }

    fn params(&self) -> &[f64] {
        match self {
            CoefficientFn::Constant { params }
            | CoefficientFn::Affine { params }
            | CoefficientFn::GeometricLinear { params }
            | CoefficientFn::Polynomial { params }
            | CoefficientFn::PutPayoff { params }
            | CoefficientFn::CallPayoff { params } => params,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CoefficientFn::Constant { .. } => "constant",
            CoefficientFn::Affine { .. } => "affine",
            CoefficientFn::GeometricLinear { .. } => "geometric-linear",
            CoefficientFn::Polynomial { .. } => "polynomial",
            CoefficientFn::PutPayoff { .. } => "put-payoff",
            CoefficientFn::CallPayoff { .. } => "call-payoff",
        }
    }

    /// Checks parameter arity and finiteness.
    pub fn validate(&self) -> Result<()> {
        let params = self.params();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidCoefficient(format!(
                "{}: non-finite parameter",
                self.kind_name()
            )));
        }
        let ok = match self {
            CoefficientFn::Constant { params } | CoefficientFn::GeometricLinear { params } => {
                params.len() == 1
            }
            CoefficientFn::Affine { params } => params.len() == 2,
            CoefficientFn::Polynomial { params } => !params.is_empty(),
            CoefficientFn::PutPayoff { params } | CoefficientFn::CallPayoff { params } => {
                (1..=3).contains(&params.len())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCoefficient(format!(
                "{}: wrong parameter count {}",
                self.kind_name(),
                params.len()
            )))
        }
    }

    /// Evaluates the function at `(t, x)`.
    #[inline]
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match self {
            CoefficientFn::Constant { params } => params[0],
            CoefficientFn::Affine { params } => params[0] * x + params[1],
            CoefficientFn::GeometricLinear { params } => params[0] * x,
            CoefficientFn::Polynomial { params } => {
                // Horner, highest coefficient last.
                params.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            CoefficientFn::PutPayoff { params } => {
                let scale = params.get(1).copied().unwrap_or(1.0);
                let offset = params.get(2).copied().unwrap_or(0.0);
                scale * (params[0] - x).max(0.0) + offset
            }
            CoefficientFn::CallPayoff { params } => {
                let scale = params.get(1).copied().unwrap_or(1.0);
                let offset = params.get(2).copied().unwrap_or(0.0);
                scale * (x - params[0]).max(0.0) + offset
            }
        }
    }

    /// Lipschitz constant in `x` on `[x_min, x_max]`.
    ///
    /// Exact for every kind except `polynomial`, whose derivative is
    /// maximized over a dense sample of the domain (matching the sampled
    /// validation policy used everywhere else).
    pub fn lipschitz_on(&self, x_min: f64, x_max: f64) -> f64 {
        match self {
            CoefficientFn::Constant { .. } => 0.0,
            CoefficientFn::Affine { params } => params[0].abs(),
            CoefficientFn::GeometricLinear { params } => params[0].abs(),
            CoefficientFn::Polynomial { params } => {
                if params.len() < 2 {
                    return 0.0;
                }
                let deriv: Vec<f64> = params
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, c)| i as f64 * c)
                    .collect();
                let n = 1024;
                (0..=n)
                    .map(|i| {
                        let x = x_min + (x_max - x_min) * i as f64 / n as f64;
                        deriv.iter().rev().fold(0.0, |acc, c| acc * x + c).abs()
                    })
                    .fold(0.0, f64::max)
            }
            CoefficientFn::PutPayoff { params } | CoefficientFn::CallPayoff { params } => {
                params.get(1).copied().unwrap_or(1.0).abs()
            }
        }
    }
}

/// Driver function of `(t, x, y, z)` drawn from a closed catalog.
///
/// `y` is the full solution vector; `z` is the scalar diffusion coefficient
/// of the component the driver belongs to (diagonal structure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorFn {
    /// Identically zero.
    Zero,
    /// The constant `value`.
    Constant { value: f64 },
    /// `<y_coeffs, y> + z_coeff*z + x_coeff*x + constant`. Missing trailing
    /// `y_coeffs` are treated as zero.
    Linear {
        #[serde(default)]
        y_coeffs: Vec<f64>,
        #[serde(default)]
        z_coeff: f64,
        #[serde(default)]
        x_coeff: f64,
        #[serde(default)]
        constant: f64,
    },
    /// `scale * atan(y[component]) + offset` with a 1-based component index:
    /// bounded, globally Lipschitz, monotone coupling through one component.
    ArctanY {
        component: usize,
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl GeneratorFn {
    pub fn linear_in_y(y_coeffs: Vec<f64>) -> Self {
        GeneratorFn::Linear {
            y_coeffs,
            z_coeff: 0.0,
            x_coeff: 0.0,
            constant: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        GeneratorFn::Constant { value }
    }

    pub fn arctan_of(component: usize, scale: f64) -> Self {
        GeneratorFn::ArctanY {
            component,
            scale,
            offset: 0.0,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            GeneratorFn::Zero => "zero",
            GeneratorFn::Constant { .. } => "constant",
            GeneratorFn::Linear { .. } => "linear",
            GeneratorFn::ArctanY { .. } => "arctan-y",
        }
    }

    /// Checks arity against the number of components `k` plus finiteness.
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            GeneratorFn::Zero => Ok(()),
            GeneratorFn::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidCoefficient(
                        "constant driver: non-finite value".into(),
                    ))
                }
            }
            GeneratorFn::Linear {
                y_coeffs,
                z_coeff,
                x_coeff,
                constant,
            } => {
                if y_coeffs.len() > k {
                    return Err(Error::InvalidCoefficient(format!(
                        "linear driver: {} y-coefficients for {} components",
                        y_coeffs.len(),
                        k
                    )));
                }
                if y_coeffs.iter().any(|c| !c.is_finite())
                    || !z_coeff.is_finite()
                    || !x_coeff.is_finite()
                    || !constant.is_finite()
                {
                    return Err(Error::InvalidCoefficient(
                        "linear driver: non-finite coefficient".into(),
                    ));
                }
                Ok(())
            }
            GeneratorFn::ArctanY {
                component,
                scale,
                offset,
            } => {
                if *component == 0 || *component > k {
                    return Err(Error::InvalidCoefficient(format!(
                        "arctan-y driver: component {component} out of 1..={k}"
                    )));
                }
                if !scale.is_finite() || !offset.is_finite() {
                    return Err(Error::InvalidCoefficient(
                        "arctan-y driver: non-finite parameter".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Evaluates the driver. `y.len()` must equal the component count the
    /// driver was validated against.
    #[inline]
    pub fn eval(&self, _t: f64, x: f64, y: &[f64], z: f64) -> f64 {
        match self {
            GeneratorFn::Zero => 0.0,
            GeneratorFn::Constant { value } => *value,
            GeneratorFn::Linear {
                y_coeffs,
                z_coeff,
                x_coeff,
                constant,
            } => {
                let mut acc = *constant + z_coeff * z + x_coeff * x;
                for (c, yi) in y_coeffs.iter().zip(y) {
                    acc += c * yi;
                }
                acc
            }
            GeneratorFn::ArctanY {
                component,
                scale,
                offset,
            } => scale * y[component - 1].atan() + offset,
        }
    }

    /// Lipschitz constant in `(y, z)` (sum norm on the increment).
    pub fn lipschitz(&self) -> f64 {
        match self {
            GeneratorFn::Zero | GeneratorFn::Constant { .. } => 0.0,
            GeneratorFn::Linear {
                y_coeffs, z_coeff, ..
            } => y_coeffs
                .iter()
                .fold(z_coeff.abs(), |acc, c| acc.max(c.abs())),
            GeneratorFn::ArctanY { scale, .. } => scale.abs(),
        }
    }

    /// True when the driver does not depend on `y` at all.
    pub fn is_decoupled_in_y(&self) -> bool {
        match self {
            GeneratorFn::Zero | GeneratorFn::Constant { .. } => true,
            GeneratorFn::Linear { y_coeffs, .. } => y_coeffs.iter().all(|c| *c == 0.0),
            GeneratorFn::ArctanY { scale, .. } => *scale == 0.0,
        }
    }

    /// True when the driver of component `own` (0-based) reads some OTHER
    /// component of `y`. Dependence on the own component is fine: it stays
    /// live in per-component solves, so only off-diagonal reads force
    /// fixed-point iteration.
    pub fn couples_off_diagonal(&self, own: usize) -> bool {
        match self {
            GeneratorFn::Zero | GeneratorFn::Constant { .. } => false,
            GeneratorFn::Linear { y_coeffs, .. } => y_coeffs
                .iter()
                .enumerate()
                .any(|(j, c)| j != own && *c != 0.0),
            GeneratorFn::ArctanY {
                component, scale, ..
            } => *scale != 0.0 && component - 1 != own,
        }
    }
}
