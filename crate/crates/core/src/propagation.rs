//! Large-scale channel losses: log-distance path loss, log-normal shadowing
//! and dust-storm attenuation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantities::{LossDb, RfCarrier};

/// Path-loss exponent and shadowing spread of a surveyed area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainProfile {
    pub name: String,
    pub alpha: f64,
    pub sigma_db: f64,
}

impl TerrainProfile {
    pub fn new(name: impl Into<String>, alpha: f64, sigma_db: f64) -> Result<Self> {
        let t = TerrainProfile {
            name: name.into(),
            alpha,
            sigma_db,
        };
        let problems = t.violations();
        if problems.is_empty() {
            Ok(t)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Gale Crater, flat region.
    pub fn area1() -> Self {
        TerrainProfile {
            name: "area1".into(),
            alpha: 2.12,
            sigma_db: 11.41,
        }
    }

    /// Gale Crater, rocky region.
    pub fn area2() -> Self {
        TerrainProfile {
            name: "area2".into(),
            alpha: 2.37,
            sigma_db: 13.26,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "area1" | "1" => Some(Self::area1()),
            "area2" | "2" => Some(Self::area2()),
            _ => None,
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            v.push(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.sigma_db >= 0.0 && self.sigma_db.is_finite()) {
            v.push(format!("sigma_db must be >= 0, got {}", self.sigma_db));
        }
        v
    }
}

/// Suspended dust: complex permittivity, particle density and mean radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DustStorm {
    pub eps_re: f64,
    pub eps_im: f64,
    /// Particles per cubic metre.
    pub n_t: f64,
    /// Mean particle radius in metres.
    pub rho_p: f64,
}

impl DustStorm {
    /// Real and imaginary permittivity of Martian dust at 2.45 GHz.
    pub const DEFAULT_EPS: (f64, f64) = (4.56, 0.251);

    pub fn new(n_t: f64, rho_p: f64) -> Result<Self> {
        let s = DustStorm {
            eps_re: Self::DEFAULT_EPS.0,
            eps_im: Self::DEFAULT_EPS.1,
            n_t,
            rho_p,
        };
        let problems = s.violations();
        if problems.is_empty() {
            Ok(s)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.eps_im > 0.0) {
            v.push(format!("eps_im must be > 0, got {}", self.eps_im));
        }
        if !self.eps_re.is_finite() {
            v.push(format!("eps_re must be finite, got {}", self.eps_re));
        }
        if !(self.n_t >= 0.0 && self.n_t.is_finite()) {
            v.push(format!("n_t_per_m3 must be >= 0, got {}", self.n_t));
        }
        if !(self.rho_p > 0.0 && self.rho_p.is_finite()) {
            v.push(format!("rho_p_m must be > 0, got {}", self.rho_p));
        }
        v
    }

    /// Attenuation per particle per m³ per m³ of particle volume per metre,
    /// i.e. everything in the dust formula except `n_t * rho_p^3 * d`.
    pub fn specific_coefficient(&self, carrier: &RfCarrier) -> f64 {
        1.029e3 * self.eps_im
            / (carrier.wavelength_m()
                * ((self.eps_re + 2.0).powi(2) + self.eps_im * self.eps_im))
    }
}

fn check_distance(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("distance_m must be > 0, got {d}")))
    }
}

/// Free-space factor `K = 4πd/λ`.
pub fn free_space_factor(d: f64, carrier: &RfCarrier) -> Result<f64> {
    check_distance(d)?;
    Ok(4.0 * std::f64::consts::PI * d / carrier.wavelength_m())
}

/// Log-distance path loss `10·α·log10(K) + shadow_db`. A zero shadow term
/// gives the median loss.
pub fn path_loss_db(
    d: f64,
    carrier: &RfCarrier,
    terrain: &TerrainProfile,
    shadow_db: f64,
) -> Result<LossDb> {
    let k = free_space_factor(d, carrier)?;
    Ok(LossDb(10.0 * terrain.alpha * k.log10() + shadow_db))
}

/// One zero-mean Gaussian shadowing draw in dB.
///
/// Always consumes exactly one normal variate from `rng`, even when
/// `sigma_db` is zero, so that downstream draws stay aligned.
pub fn sample_shadowing<R: Rng + ?Sized>(terrain: &TerrainProfile, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    terrain.sigma_db * z
}

/// Dust-storm attenuation over a path of length `d`.
///
/// Grows with particle volume (`rho_p^3`), density and path length.
pub fn dust_attenuation_db(storm: &DustStorm, d: f64, carrier: &RfCarrier) -> Result<LossDb> {
    check_distance(d)?;
    Ok(LossDb(
        storm.specific_coefficient(carrier) * storm.n_t * storm.rho_p.powi(3) * d,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{ks_critical_1pct, ks_statistic, normal_cdf};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn carrier() -> RfCarrier {
        RfCarrier::default()
    }

    #[test]
    fn free_space_factor_values() {
        let c = carrier();
        // 4π·50/0.122364268... = 5134.8203
        assert!((free_space_factor(50.0, &c).unwrap() - 5134.820304).abs() < 1e-5);
        let unit = c.wavelength_m() / (4.0 * std::f64::consts::PI);
        assert!((free_space_factor(unit, &c).unwrap() - 1.0).abs() < 1e-12);
        let k1 = free_space_factor(37.0, &c).unwrap();
        let k2 = free_space_factor(74.0, &c).unwrap();
        assert!((k2 / k1 - 2.0).abs() < 1e-12);
        assert!(free_space_factor(0.0, &c).is_err());
        assert!(free_space_factor(-1.0, &c).is_err());
    }

    #[test]
    fn median_path_loss_at_50m() {
        let c = carrier();
        let a1 = path_loss_db(50.0, &c, &TerrainProfile::area1(), 0.0).unwrap();
        let a2 = path_loss_db(50.0, &c, &TerrainProfile::area2(), 0.0).unwrap();
        assert!((a1.0 - 78.663_135).abs() < 1e-5);
        assert!((a2.0 - 87.939_448).abs() < 1e-5);
        let unit = c.wavelength_m() / (4.0 * std::f64::consts::PI);
        let t = TerrainProfile::new("x", 3.3, 0.0).unwrap();
        assert!(path_loss_db(unit, &c, &t, 0.0).unwrap().0.abs() < 1e-12);
        let shadowed = path_loss_db(50.0, &c, &TerrainProfile::area1(), 4.5).unwrap();
        assert!((shadowed.0 - a1.0 - 4.5).abs() < 1e-12);
    }

    #[test]
    fn path_loss_monotone_and_area_ordered() {
        let c = carrier();
        let (t1, t2) = (TerrainProfile::area1(), TerrainProfile::area2());
        let mut prev = f64::NEG_INFINITY;
        for i in 1..400 {
            let d = 0.05 * i as f64 + c.wavelength_m();
            let l1 = path_loss_db(d, &c, &t1, 0.0).unwrap().0;
            let l2 = path_loss_db(d, &c, &t2, 0.0).unwrap().0;
            assert!(l1 > prev);
            assert!(l2 > l1);
            prev = l1;
        }
    }

    #[test]
    fn terrain_invariants() {
        assert!(TerrainProfile::new("bad", 0.0, 1.0).is_err());
        assert!(TerrainProfile::new("bad", 2.0, -1.0).is_err());
        assert_eq!(TerrainProfile::preset("Area2"), Some(TerrainProfile::area2()));
        assert_eq!(TerrainProfile::preset("area3"), None);
    }

    #[test]
    fn shadowing_degenerate_and_deterministic() {
        let flat = TerrainProfile::new("flat", 2.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_shadowing(&flat, &mut rng), 0.0);
        }
        let t = TerrainProfile::area1();
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            assert_eq!(sample_shadowing(&t, &mut a), sample_shadowing(&t, &mut b));
        }
    }

    #[test]
    fn shadowing_moments_and_normality() {
        let t = TerrainProfile::area1();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_shadowing(&t, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() / 11.41 - 1.0).abs() < 0.01, "std {}", var.sqrt());

        let sub = &draws[..100_000];
        let d = ks_statistic(sub, |x| normal_cdf(x / 11.41));
        assert!(d < ks_critical_1pct(sub.len()), "KS D = {d}");
    }

    #[test]
    fn dust_attenuation_values() {
        let c = carrier();
        let storm = DustStorm::new(1e5, 5e-3).unwrap();
        // 1.029e3·0.251 / (λ·(6.56² + 0.251²)) = 48.976919
        assert!((storm.specific_coefficient(&c) - 48.976_919).abs() < 1e-5);
        let heavy = dust_attenuation_db(&storm, 50.0, &c).unwrap().0;
        assert!((heavy - 30.610_574).abs() < 1e-5);
        let fine = DustStorm::new(1e5, 1e-4).unwrap();
        let light = dust_attenuation_db(&fine, 50.0, &c).unwrap().0;
        assert!((light - 2.448_846e-4).abs() < 1e-9);
        let clear = DustStorm::new(0.0, 5e-3).unwrap();
        assert_eq!(dust_attenuation_db(&clear, 50.0, &c).unwrap().0, 0.0);
        assert!(dust_attenuation_db(&storm, 0.0, &c).is_err());
    }

    #[test]
    fn dust_attenuation_is_linear() {
        let c = carrier();
        let base = DustStorm::new(3e3, 2e-3).unwrap();
        let l = dust_attenuation_db(&base, 20.0, &c).unwrap().0;
        let dens = DustStorm { n_t: 6e3, ..base.clone() };
        assert!((dust_attenuation_db(&dens, 20.0, &c).unwrap().0 / l - 2.0).abs() < 1e-12);
        assert!((dust_attenuation_db(&base, 60.0, &c).unwrap().0 / l - 3.0).abs() < 1e-12);
        let big = DustStorm { rho_p: 4e-3, ..base.clone() };
        assert!((dust_attenuation_db(&big, 20.0, &c).unwrap().0 / l - 8.0).abs() < 1e-12);
    }

    #[test]
    fn dust_invariants() {
        assert!(DustStorm::new(-1.0, 1e-3).is_err());
        assert!(DustStorm::new(1.0, 0.0).is_err());
        let mut s = DustStorm::new(1.0, 1e-3).unwrap();
        s.eps_im = 0.0;
        assert_eq!(s.violations().len(), 1);
    }
}
