//! Uniform space-time lattice and multi-component node fields.
//!
//! All PDE solvers in this crate march explicitly on one shared lattice:
//! `nx` equally spaced states on `[x_min, x_max]` times `nt` steps on
//! `[0, t_horizon]`. Construction enforces the band-level stability bound
//! `dt * sigma_hi_sq / dx^2 <= 1/2`; solvers additionally check the bound
//! with the state-dependent diffusion coefficient folded in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gparams::GParams;

/// Immutable lattice description. `nx` counts nodes, `nt` counts steps,
/// so there are `nt + 1` time levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    nx: usize,
    nt: usize,
    t_horizon: f64,
    dx: f64,
    dt: f64,
}

impl Grid {
    /// Builds a lattice and enforces the band stability bound.
    pub fn new(
        x_min: f64,
        x_max: f64,
        nx: usize,
        nt: usize,
        t_horizon: f64,
        band: &GParams,
    ) -> Result<Self> {
        band.validate()?;
        if !x_min.is_finite() || !x_max.is_finite() || !t_horizon.is_finite() {
            return Err(Error::InvalidGrid("non-finite bounds".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "x_min {x_min} must be below x_max {x_max}"
            )));
        }
        if nx < 3 {
            return Err(Error::InvalidGrid(format!("nx = {nx} (need at least 3)")));
        }
        if nt < 1 {
            return Err(Error::InvalidGrid("nt must be at least 1".into()));
        }
        if t_horizon <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive, got {t_horizon}"
            )));
        }
        let dx = (x_max - x_min) / (nx - 1) as f64;
        let dt = t_horizon / nt as f64;
        let cfl = dt * band.sigma_hi_sq / (dx * dx);
        if cfl > 0.5 + 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "unstable lattice: dt*sigma_hi_sq/dx^2 = {cfl:.4} > 0.5; increase nt or decrease nx"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            nx,
            nt,
            t_horizon,
            dx,
            dt,
        })
    }

    /// Default spatial bounds: six band standard deviations around `x0`
    /// (scaled by `max(1, |x0|)` so proportional coefficients are covered),
    /// then widened to keep every anchor point comfortably interior.
    pub fn default_domain(x0: f64, band: &GParams, t_horizon: f64, anchors: &[f64]) -> (f64, f64) {
        let span = 6.0 * band.sigma_hi_sq.sqrt() * x0.abs().max(1.0) * t_horizon.sqrt();
        let mut lo = x0 - span;
        let mut hi = x0 + span;
        for &a in anchors {
            lo = lo.min(a - 0.2 * span);
            hi = hi.max(a + 0.2 * span);
        }
        (lo, hi)
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn nt(&self) -> usize {
        self.nt
    }

    #[inline]
    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// State of node `s`.
    #[inline]
    pub fn x(&self, s: usize) -> f64 {
        self.x_min + s as f64 * self.dx
    }

    /// Time of level `j` (level `nt` is the horizon).
    #[inline]
    pub fn t(&self, j: usize) -> f64 {
        if j == self.nt {
            self.t_horizon
        } else {
            j as f64 * self.dt
        }
    }

    /// All node states, in order.
    pub fn states(&self) -> Vec<f64> {
        (0..self.nx).map(|s| self.x(s)).collect()
    }

    /// Clamped linear-interpolation weights for an off-lattice state:
    /// returns the left node index and the weight of the right node.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let pos = (x - self.x_min) / self.dx;
        if pos <= 0.0 {
            return (0, 0.0);
        }
        let max = (self.nx - 2) as f64;
        if pos >= (self.nx - 1) as f64 {
            return (self.nx - 2, 1.0);
        }
        let s = pos.floor().min(max) as usize;
        (s, pos - s as f64)
    }

    /// Linear interpolation of a node-level slice at state `x` (clamped
    /// to the lattice range).
    #[inline]
    pub fn interp(&self, level: &[f64], x: f64) -> f64 {
        let (s, w) = self.locate(x);
        (1.0 - w) * level[s] + w * level[s + 1]
    }
}

/// Node values for `k` components over every time level of a [`Grid`].
///
/// Layout is `[component][time level][space node]`, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    k: usize,
    nt: usize,
    nx: usize,
    data: Vec<f64>,
}

impl ValueField {
    /// Zero-initialized field shaped for `grid` with `k` components.
    pub fn zeros(k: usize, grid: &Grid) -> Self {
        Self {
            k,
            nt: grid.nt(),
            nx: grid.nx(),
            data: vec![0.0; k * (grid.nt() + 1) * grid.nx()],
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn nt(&self) -> usize {
        self.nt
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        (i * (self.nt + 1) + j) * self.nx
    }

    /// Value of component `i` at time level `j`, node `s`.
    #[inline]
    pub fn at(&self, i: usize, j: usize, s: usize) -> f64 {
        self.data[self.offset(i, j) + s]
    }

    /// One time level of one component, as a slice.
    #[inline]
    pub fn level(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.data[o..o + self.nx]
    }

    /// Mutable access to one time level of one component.
    #[inline]
    pub fn level_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j);
        &mut self.data[o..o + self.nx]
    }

    /// Sup-norm distance to another field of identical shape.
    pub fn sup_diff(&self, other: &ValueField) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "field shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Sup-norm over all nodes.
    pub fn sup_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Linear interpolation of component `i` at time level `j`, state `x`.
    #[inline]
    pub fn interp_x(&self, i: usize, j: usize, x: f64, grid: &Grid) -> f64 {
        grid.interp(self.level(i, j), x)
    }
}
