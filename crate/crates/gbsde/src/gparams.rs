//! Volatility band and the sublinear function it induces.
//!
//! A band `0 < sigma_lo_sq <= sigma_hi_sq` prices second-order exposure
//! one-sidedly: convexity is charged at the top of the band, concavity at
//! the bottom,
//!
//! ```text
//! G(a) = (sigma_hi_sq * a_plus - sigma_lo_sq * a_minus) / 2.
//! ```
//!
//! `G` is monotone, positively homogeneous and subadditive; when the band
//! collapses (`sigma_lo_sq == sigma_hi_sq = s`) it reduces to the linear
//! map `a -> s*a/2` and every construction in this crate degenerates to its
//! classical (single-measure) counterpart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance band `[sigma_lo_sq, sigma_hi_sq]` for the driving noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GParams {
    /// Lower variance bound (strictly positive).
    pub sigma_lo_sq: f64,
    /// Upper variance bound (finite, `>= sigma_lo_sq`).
    pub sigma_hi_sq: f64,
}

impl GParams {
    /// Builds a band, rejecting non-finite, non-positive or unordered bounds.
    pub fn new(sigma_lo_sq: f64, sigma_hi_sq: f64) -> Result<Self> {
        if !sigma_lo_sq.is_finite() || !sigma_hi_sq.is_finite() {
            return Err(Error::InvalidBand(format!(
                "bounds must be finite, got [{sigma_lo_sq}, {sigma_hi_sq}]"
            )));
        }
        if sigma_lo_sq <= 0.0 {
            return Err(Error::InvalidBand(format!(
                "lower bound must be strictly positive, got {sigma_lo_sq}"
            )));
        }
        if sigma_hi_sq < sigma_lo_sq {
            return Err(Error::InvalidBand(format!(
                "upper bound {sigma_hi_sq} below lower bound {sigma_lo_sq}"
            )));
        }
        Ok(Self {
            sigma_lo_sq,
            sigma_hi_sq,
        })
    }

    /// The sublinear generator `G(a) = (hi*a^+ - lo*a^-)/2`.
    #[inline]
    pub fn g(&self, a: f64) -> f64 {
        if a >= 0.0 {
            0.5 * self.sigma_hi_sq * a
        } else {
            0.5 * self.sigma_lo_sq * a
        }
    }

    /// True when the band has collapsed to a single admissible variance.
    pub fn is_degenerate(&self) -> bool {
        self.sigma_lo_sq == self.sigma_hi_sq
    }

    /// Re-checks the invariants (useful after deserializing).
    pub fn validate(&self) -> Result<()> {
        Self::new(self.sigma_lo_sq, self.sigma_hi_sq).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charges_convexity_at_the_top_of_the_band() {
        let gp = GParams::new(1.0, 4.0).unwrap();
        assert_eq!(gp.g(2.0), 4.0);
    }

    #[test]
    fn charges_concavity_at_the_bottom_of_the_band() {
        let gp = GParams::new(1.0, 4.0).unwrap();
        assert_eq!(gp.g(-2.0), -1.0);
    }

    #[test]
    fn vanishes_at_zero() {
        let gp = GParams::new(0.3, 7.1).unwrap();
        assert_eq!(gp.g(0.0), 0.0);
        assert_eq!(gp.g(-0.0), 0.0);
    }

    #[test]
    fn degenerate_band_is_linear() {
        let gp = GParams::new(2.5, 2.5).unwrap();
        assert!(gp.is_degenerate());
        for a in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            assert_eq!(gp.g(a), 0.5 * 2.5 * a);
        }
    }

    #[test]
    fn rejects_bad_bands() {
        assert!(GParams::new(0.0, 1.0).is_err());
        assert!(GParams::new(-1.0, 1.0).is_err());
        assert!(GParams::new(2.0, 1.0).is_err());
        assert!(GParams::new(f64::NAN, 1.0).is_err());
        assert!(GParams::new(1.0, f64::INFINITY).is_err());
    }
}
