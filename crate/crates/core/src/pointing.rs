//! Misalignment (pointing-error) fading.
//!
//! A circular receive aperture of radius `beta` sits in a Gaussian beam of
//! waist `r_d`. With Gaussian jitter of deviation `sigma_s` on each axis the
//! radial offset is Rayleigh distributed and the collected power fraction
//!
//! ```text
//! m(r) = a0 · exp(-2 r² / w_eq²)
//! ```
//!
//! has CDF `(ζ / a0)^xi` on `(0, a0]` with `xi = w_eq² / (4 sigma_s²)`.

use std::f64::consts::{LN_10, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Beam waist used when none is given, in wavelengths.
pub const DEFAULT_WAIST_WAVELENGTHS: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingGeometry {
    /// Effective aperture radius of the receiver (m).
    pub beta: f64,
    /// Beam waist at the receiver distance (m).
    pub r_d: f64,
    /// Jitter standard deviation per axis (m).
    pub sigma_s: f64,
}

impl PointingGeometry {
    pub fn new(beta: f64, r_d: f64, sigma_s: f64) -> Result<Self> {
        let g = PointingGeometry { beta, r_d, sigma_s };
        let problems = g.violations();
        if problems.is_empty() {
            Ok(g)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Geometry with the default `7λ` waist.
    pub fn with_default_waist(beta: f64, sigma_s: f64, wavelength: f64) -> Result<Self> {
        Self::new(beta, DEFAULT_WAIST_WAVELENGTHS * wavelength, sigma_s)
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            v.push(format!("beta_m must be > 0, got {}", self.beta));
        }
        if !(self.r_d > 0.0 && self.r_d.is_finite()) {
            v.push(format!("r_d_m must be > 0, got {}", self.r_d));
        }
        if !(self.sigma_s >= 0.0 && self.sigma_s.is_finite()) {
            v.push(format!("sigma_s_m must be >= 0, got {}", self.sigma_s));
        }
        v
    }
}

/// Derived fading parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisalignmentModel {
    /// Collected power fraction at zero offset.
    pub a0: f64,
    /// Equivalent beamwidth (m).
    pub w_eq: f64,
    /// Shape exponent of the fade distribution; infinite without jitter.
    pub xi: f64,
    pub sigma_s: f64,
}

pub fn derive_model(geom: &PointingGeometry) -> MisalignmentModel {
    let v = PI.sqrt() * geom.beta / (2f64.sqrt() * geom.r_d);
    let erf_v = libm::erf(v);
    let a0 = erf_v * erf_v;
    // Overflows to +inf for apertures many waists wide, where offsets no
    // longer matter.
    let w_eq_sq = geom.r_d * geom.r_d * PI.sqrt() * erf_v * (v * v).exp() / (2.0 * v);
    let xi = if geom.sigma_s > 0.0 {
        w_eq_sq / (4.0 * geom.sigma_s * geom.sigma_s)
    } else {
        f64::INFINITY
    };
    MisalignmentModel {
        a0,
        w_eq: w_eq_sq.sqrt(),
        xi,
        sigma_s: geom.sigma_s,
    }
}

impl MisalignmentModel {
    /// Collected power fraction at radial offset `r`.
    pub fn fraction_at_offset(&self, r: f64) -> Result<f64> {
        check_offset(r)?;
        Ok(self.a0 * (-2.0 * r * r / (self.w_eq * self.w_eq)).exp())
    }

    /// Same as [`fraction_at_offset`](Self::fraction_at_offset) in dB. Stays
    /// finite where the linear value would underflow to zero.
    pub fn fraction_at_offset_db(&self, r: f64) -> Result<f64> {
        check_offset(r)?;
        Ok(10.0 * self.a0.log10() - 20.0 / LN_10 * r * r / (self.w_eq * self.w_eq))
    }

    pub fn fade_pdf(&self, zeta: f64) -> Result<f64> {
        self.check_zeta(zeta)?;
        if !self.xi.is_finite() {
            return Err(Error::domain(
                "fade density is a point mass when sigma_s = 0",
            ));
        }
        Ok(self.xi / self.a0.powf(self.xi) * zeta.powf(self.xi - 1.0))
    }

    pub fn fade_cdf(&self, zeta: f64) -> f64 {
        if zeta <= 0.0 {
            0.0
        } else if zeta >= self.a0 {
            1.0
        } else if !self.xi.is_finite() {
            0.0
        } else {
            (zeta / self.a0).powf(self.xi)
        }
    }

    /// Expected collected fraction, `a0·xi/(xi+1)`.
    pub fn mean_fraction(&self) -> f64 {
        if self.xi.is_finite() {
            self.a0 * self.xi / (self.xi + 1.0)
        } else {
            self.a0
        }
    }

    fn check_zeta(&self, zeta: f64) -> Result<()> {
        if zeta > 0.0 && zeta <= self.a0 {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "fade value must lie in (0, {}], got {zeta}",
                self.a0
            )))
        }
    }
}

fn check_offset(r: f64) -> Result<()> {
    if r >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("radial offset must be >= 0, got {r}")))
    }
}

/// One Rayleigh-distributed radial offset, built from two independent
/// per-axis Gaussian displacements. Always consumes two normal variates.
pub fn sample_offset<R: Rng + ?Sized>(sigma_s: f64, rng: &mut R) -> f64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    sigma_s * x.hypot(y)
}
