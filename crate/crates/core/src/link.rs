//! End-to-end link budget and the Monte Carlo harvest estimator.
//!
//! The budget is assembled in dB:
//!
//! ```text
//! P_RX = P_TX + G_T + G_R − PL(d, χ) − P_DS + 10·log10(m) + 10·log10(g)
//! ```
//!
//! where `χ` is the shadowing draw, `m` the collected power fraction under
//! misalignment and `g` the optional unit-mean small-scale power gain.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harvester::HarvesterModel;
use crate::pointing::{derive_model, sample_offset, MisalignmentModel, PointingGeometry};
use crate::propagation::{
    dust_attenuation_db, path_loss_db, sample_shadowing, DustStorm, TerrainProfile,
};
use crate::quantities::{dbm_to_mw, PowerDbm, RfCarrier};
use crate::rng::sample_stream;

/// How the shadowing term enters each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShadowingMode {
    /// A fresh log-normal draw per sample.
    #[default]
    Sampled,
    /// Shadowing pinned at its median (0 dB).
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmallScaleFading {
    #[default]
    Off,
    /// Rayleigh amplitude, exponential power gain with unit mean.
    Rayleigh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkScenario {
    pub carrier: RfCarrier,
    pub p_tx_w: f64,
    pub g_t_db: f64,
    pub g_r_db: f64,
    pub distance_m: f64,
    pub terrain: TerrainProfile,
    pub dust: Option<DustStorm>,
    pub pointing: Option<PointingGeometry>,
    pub small_scale: SmallScaleFading,
    pub shadowing: ShadowingMode,
}

impl Default for LinkScenario {
    /// 10 W at 2.45 GHz over 50 m of Area 1, 28 dB transmit gain, isotropic
    /// receiver, no dust and perfect alignment.
    fn default() -> Self {
        LinkScenario {
            carrier: RfCarrier::default(),
            p_tx_w: 10.0,
            g_t_db: 28.0,
            g_r_db: 0.0,
            distance_m: 50.0,
            terrain: TerrainProfile::area1(),
            dust: None,
            pointing: None,
            small_scale: SmallScaleFading::Off,
            shadowing: ShadowingMode::Sampled,
        }
    }
}

impl LinkScenario {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.p_tx_w > 0.0 && self.p_tx_w.is_finite()) {
            v.push(format!("p_tx_w must be > 0, got {}", self.p_tx_w));
        }
        if !(self.distance_m > 0.0 && self.distance_m.is_finite()) {
            v.push(format!("distance_m must be > 0, got {}", self.distance_m));
        }
        if !self.g_t_db.is_finite() {
            v.push(format!("g_t_db must be finite, got {}", self.g_t_db));
        }
        if !self.g_r_db.is_finite() {
            v.push(format!("g_r_db must be finite, got {}", self.g_r_db));
        }
        v.extend(self.terrain.violations());
        if let Some(d) = &self.dust {
            v.extend(d.violations());
        }
        if let Some(p) = &self.pointing {
            v.extend(p.violations());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Median-channel budget split into its terms. Losses are positive dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetBreakdown {
    pub p_tx_dbm: f64,
    pub g_t_db: f64,
    pub g_r_db: f64,
    pub path_loss_db: f64,
    pub dust_loss_db: f64,
    /// `−10·log10(a0)`, zero without a pointing model.
    pub pointing_loss_db: f64,
    pub p_rx_dbm: f64,
}

pub fn budget_breakdown(s: &LinkScenario) -> Result<BudgetBreakdown> {
    s.validate()?;
    let p_tx_dbm = PowerDbm::from_watts(s.p_tx_w)?.value();
    let path_loss_db = path_loss_db(s.distance_m, &s.carrier, &s.terrain, 0.0)?.0;
    let dust_loss_db = match &s.dust {
        Some(d) => dust_attenuation_db(d, s.distance_m, &s.carrier)?.0,
        None => 0.0,
    };
    let pointing_loss_db = match &s.pointing {
        Some(g) => -10.0 * derive_model(g).a0.log10(),
        None => 0.0,
    };
    let p_rx_dbm =
        p_tx_dbm + s.g_t_db + s.g_r_db - path_loss_db - dust_loss_db - pointing_loss_db;
    Ok(BudgetBreakdown {
        p_tx_dbm,
        g_t_db: s.g_t_db,
        g_r_db: s.g_r_db,
        path_loss_db,
        dust_loss_db,
        pointing_loss_db,
        p_rx_dbm,
    })
}

/// Received power with zero shadowing, perfect pointing at offset zero and
/// small-scale fading off.
pub fn median_received_dbm(s: &LinkScenario) -> Result<PowerDbm> {
    Ok(PowerDbm(budget_breakdown(s)?.p_rx_dbm))
}

/// Scenario with all per-sample constants worked out.
#[derive(Debug, Clone)]
struct PreparedLink {
    fixed_dbm: f64,
    shadowing: ShadowingMode,
    pointing: Option<MisalignmentModel>,
    small_scale: SmallScaleFading,
}

impl PreparedLink {
    fn new(s: &LinkScenario) -> Result<Self> {
        let b = budget_breakdown(s)?;
        Ok(PreparedLink {
            // pointing enters per sample, not through a0
            fixed_dbm: b.p_tx_dbm + b.g_t_db + b.g_r_db - b.path_loss_db - b.dust_loss_db,
            shadowing: s.shadowing,
            pointing: s.pointing.as_ref().map(derive_model),
            small_scale: s.small_scale,
        })
    }

    /// Received power of one realisation. Draws are consumed in a fixed
    /// order (shadowing, two jitter axes, small-scale gain) whether or not
    /// each effect is enabled.
    fn draw_p_rx_dbm<R: Rng + ?Sized>(&self, terrain: &TerrainProfile, rng: &mut R) -> f64 {
        let shadow = sample_shadowing(terrain, rng);
        let offset_unit = sample_offset(1.0, rng);
        let gain: f64 = rng.sample(Exp1);

        let mut p = self.fixed_dbm;
        if self.shadowing == ShadowingMode::Sampled {
            p -= shadow;
        }
        if let Some(m) = &self.pointing {
            let r = m.sigma_s * offset_unit;
            p += m
                .fraction_at_offset_db(r)
                .expect("scaled Rayleigh offset is non-negative");
        }
        if self.small_scale == SmallScaleFading::Rayleigh {
            p += 10.0 * gain.max(f64::MIN_POSITIVE).log10();
        }
        p
    }
}

/// One Monte Carlo realisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestDraw {
    pub p_rx_dbm: f64,
    pub p_rx_mw: f64,
    pub harvested_uw: f64,
    pub clamped: bool,
    pub extrapolated: bool,
}

fn harvest_from_dbm(model: &HarvesterModel, p_rx_dbm: f64) -> Result<HarvestDraw> {
    let p_rx_mw = dbm_to_mw(PowerDbm(p_rx_dbm)).value();
    let eff = model.efficiency(p_rx_mw)?;
    Ok(HarvestDraw {
        p_rx_dbm,
        p_rx_mw,
        harvested_uw: p_rx_mw * eff.percent / 100.0 * 1e3,
        clamped: eff.clamped,
        extrapolated: model.is_extrapolated(p_rx_mw),
    })
}

pub fn sample_harvest<R: Rng + ?Sized>(
    s: &LinkScenario,
    model: &HarvesterModel,
    rng: &mut R,
) -> Result<HarvestDraw> {
    let link = PreparedLink::new(s)?;
    harvest_from_dbm(model, link.draw_p_rx_dbm(&s.terrain, rng))
}

/// Harvested power of one realisation, in μW.
pub fn sample_harvest_uw<R: Rng + ?Sized>(
    s: &LinkScenario,
    model: &HarvesterModel,
    rng: &mut R,
) -> Result<f64> {
    Ok(sample_harvest(s, model, rng)?.harvested_uw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSettings {
    pub n_samples: usize,
    pub seed: u64,
    /// Probabilities in (0, 1) reported in [`HarvestStats::quantiles`].
    pub quantiles: Vec<f64>,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        MonteCarloSettings {
            n_samples: 20_000,
            seed: 1,
            quantiles: vec![0.05, 0.95],
        }
    }
}

impl MonteCarloSettings {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_samples == 0 {
            v.push("n_samples must be >= 1".to_string());
        }
        for &q in &self.quantiles {
            if !(q > 0.0 && q < 1.0) {
                v.push(format!("quantiles must lie in (0, 1), got {q}"));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestStats {
    pub n_samples: usize,
    pub seed: u64,
    pub mean_uw: f64,
    pub median_uw: f64,
    /// `(probability, harvested μW)` in the order requested.
    pub quantiles: Vec<(f64, f64)>,
    pub mean_p_rx_dbm: f64,
    pub median_p_rx_dbm: f64,
    /// Mean received power on the linear scale.
    pub mean_p_rx_mw: f64,
    /// Samples whose raw efficiency fell outside [0, 100] %.
    pub clamp_count: usize,
    /// Samples whose incident power fell outside the harvester's valid range.
    pub extrapolated_count: usize,
}

impl HarvestStats {
    pub fn quantile(&self, p: f64) -> Option<f64> {
        self.quantiles.iter().find(|(q, _)| *q == p).map(|&(_, v)| v)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo estimate of harvested-power statistics.
///
/// Sample `i` always uses the random stream `(mc.seed, i)` and the
/// aggregation runs sequentially in sample order, so the result is
/// bit-identical for any rayon pool size.
pub fn estimate_harvest(
    s: &LinkScenario,
    model: &HarvesterModel,
    mc: &MonteCarloSettings,
) -> Result<HarvestStats> {
    let mut problems = s.violations();
    problems.extend(mc.violations());
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let link = PreparedLink::new(s)?;
    let draws = (0..mc.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_stream(mc.seed, i as u64);
            harvest_from_dbm(model, link.draw_p_rx_dbm(&s.terrain, &mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarise(&draws, mc))
}

fn summarise(draws: &[HarvestDraw], mc: &MonteCarloSettings) -> HarvestStats {
    let n = draws.len() as f64;
    let mut sum_uw = 0.0;
    let mut sum_dbm = 0.0;
    let mut sum_mw = 0.0;
    let mut clamp_count = 0;
    let mut extrapolated_count = 0;
    for d in draws {
        sum_uw += d.harvested_uw;
        sum_dbm += d.p_rx_dbm;
        sum_mw += d.p_rx_mw;
        clamp_count += d.clamped as usize;
        extrapolated_count += d.extrapolated as usize;
    }
    let mut harvested: Vec<f64> = draws.iter().map(|d| d.harvested_uw).collect();
    harvested.sort_by(f64::total_cmp);
    let mut p_rx: Vec<f64> = draws.iter().map(|d| d.p_rx_dbm).collect();
    p_rx.sort_by(f64::total_cmp);
    HarvestStats {
        n_samples: draws.len(),
        seed: mc.seed,
        mean_uw: sum_uw / n,
        median_uw: quantile_sorted(&harvested, 0.5),
        quantiles: mc
            .quantiles
            .iter()
            .map(|&q| (q, quantile_sorted(&harvested, q)))
            .collect(),
        mean_p_rx_dbm: sum_dbm / n,
        median_p_rx_dbm: quantile_sorted(&p_rx, 0.5),
        mean_p_rx_mw: sum_mw / n,
        clamp_count,
        extrapolated_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ideal() -> LinkScenario {
        LinkScenario {
            terrain: TerrainProfile::new("flat", 2.12, 0.0).unwrap(),
            ..LinkScenario::default()
        }
    }

    #[test]
    fn default_budget() {
        let s = LinkScenario::default();
        let p = median_received_dbm(&s).unwrap().value();
        assert!((p - -10.663_135).abs() < 1e-5);
        let twenty = LinkScenario { p_tx_w: 20.0, ..s.clone() };
        let p20 = median_received_dbm(&twenty).unwrap().value();
        assert!((p20 - -7.652_835).abs() < 1e-5);
        assert!((dbm_to_mw(PowerDbm(p20)).value() - 0.171_8).abs() < 1e-3);
        let dusty = LinkScenario {
            dust: Some(DustStorm::new(1e5, 5e-3).unwrap()),
            ..s.clone()
        };
        let pd = median_received_dbm(&dusty).unwrap().value();
        assert!((pd - (-10.663_135 - 30.610_574)).abs() < 1e-5);
        let area2 = LinkScenario {
            terrain: TerrainProfile::area2(),
            ..s
        };
        assert!((median_received_dbm(&area2).unwrap().value() - -19.939_448).abs() < 1e-5);
    }

    #[test]
    fn budget_terms_add_up() {
        let s = LinkScenario {
            p_tx_w: 3.7,
            g_t_db: 21.0,
            g_r_db: 2.5,
            distance_m: 83.0,
            terrain: TerrainProfile::area2(),
            dust: Some(DustStorm::new(2e4, 3e-3).unwrap()),
            pointing: Some(PointingGeometry::new(0.7, 0.9, 0.2).unwrap()),
            ..LinkScenario::default()
        };
        let b = budget_breakdown(&s).unwrap();
        let p_tx = 10.0 * (3.7e3f64).log10();
        let pl = path_loss_db(83.0, &s.carrier, &s.terrain, 0.0).unwrap().0;
        let ds = dust_attenuation_db(s.dust.as_ref().unwrap(), 83.0, &s.carrier)
            .unwrap()
            .0;
        let pt = -10.0 * derive_model(s.pointing.as_ref().unwrap()).a0.log10();
        assert!((b.p_tx_dbm - p_tx).abs() < 1e-12);
        assert_eq!(b.path_loss_db, pl);
        assert_eq!(b.dust_loss_db, ds);
        assert!((b.pointing_loss_db - pt).abs() < 1e-12);
        let total = p_tx + 21.0 + 2.5 - pl - ds - pt;
        assert!((b.p_rx_dbm - total).abs() < 1e-12);
    }

    #[test]
    fn invalid_scenarios_list_every_problem() {
        let s = LinkScenario {
            p_tx_w: 0.0,
            distance_m: -5.0,
            ..LinkScenario::default()
        };
        match median_received_dbm(&s) {
            Err(Error::Config(v)) => {
                assert_eq!(v.len(), 2);
                assert!(v.iter().any(|m| m.contains("distance_m must be > 0")));
                assert!(v.iter().any(|m| m.contains("p_tx_w must be > 0")));
            }
            other => panic!("unexpected {other:?}"),
        }
        let mc = MonteCarloSettings {
            n_samples: 0,
            quantiles: vec![1.5],
            ..MonteCarloSettings::default()
        };
        assert_eq!(mc.violations().len(), 2);
    }

    #[test]
    fn deterministic_sample_without_randomness() {
        let c = HarvesterModel::harvester_c();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let uw = sample_harvest_uw(&ideal(), &c, &mut rng).unwrap();
            assert!((uw - 42.760_397).abs() < 1e-5, "{uw}");
        }
        let stats = estimate_harvest(&ideal(), &c, &MonteCarloSettings::default()).unwrap();
        // the mean is a plain sum over 20 000 equal terms
        assert!((stats.mean_uw / stats.median_uw - 1.0).abs() < 1e-12);
        assert_eq!(stats.quantile(0.05), Some(stats.median_uw));
        assert_eq!(stats.quantile(0.95), Some(stats.median_uw));
        assert!((stats.median_uw - 42.760_397).abs() < 1e-5);
    }

    #[test]
    fn median_mode_ignores_shadowing() {
        let s = LinkScenario {
            shadowing: ShadowingMode::Median,
            ..LinkScenario::default()
        };
        let stats = estimate_harvest(&s, &HarvesterModel::harvester_c(), &MonteCarloSettings::default())
            .unwrap();
        assert!((stats.median_uw - 42.760_397).abs() < 1e-5);
        assert!((stats.mean_uw / stats.median_uw - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_pointing_matches_no_pointing() {
        let c = HarvesterModel::harvester_c();
        let aligned = LinkScenario {
            pointing: Some(PointingGeometry::new(60.0, 0.85, 0.0).unwrap()),
            ..LinkScenario::default()
        };
        let mc = MonteCarloSettings {
            n_samples: 2000,
            ..MonteCarloSettings::default()
        };
        let a = estimate_harvest(&aligned, &c, &mc).unwrap();
        let b = estimate_harvest(&LinkScenario::default(), &c, &mc).unwrap();
        assert!((a.mean_uw - b.mean_uw).abs() <= 1e-9 * b.mean_uw);
        assert!((a.median_uw - b.median_uw).abs() <= 1e-9 * b.median_uw);
    }

    #[test]
    fn harvest_never_exceeds_received() {
        let s = LinkScenario {
            pointing: Some(PointingGeometry::new(0.5, 0.86, 0.4).unwrap()),
            small_scale: SmallScaleFading::Rayleigh,
            dust: Some(DustStorm::new(1e3, 5e-3).unwrap()),
            ..LinkScenario::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for m in HarvesterModel::builtins() {
            for _ in 0..5000 {
                let d = sample_harvest(&s, &m, &mut rng).unwrap();
                assert!(d.harvested_uw >= 0.0);
                assert!(d.harvested_uw <= d.p_rx_mw * 1e3 * (1.0 + 1e-12));
            }
        }
    }

    /// Nearly flat efficiency (η = 50/(P³+1) %, P ≪ 1 mW), so harvested
    /// power is proportional to received power.
    fn flat_harvester() -> HarvesterModel {
        HarvesterModel::new("flat", [0.0, 0.0, 50.0], [0.0, 0.0, 1.0], 1e-12, 1.0).unwrap()
    }

    #[test]
    fn pointing_mean_matches_closed_form() {
        let geom = PointingGeometry::new(0.5, 0.856_549_88, 0.5).unwrap();
        let s = LinkScenario {
            p_tx_w: 0.01,
            shadowing: ShadowingMode::Median,
            pointing: Some(geom.clone()),
            ..LinkScenario::default()
        };
        let aligned = LinkScenario {
            pointing: None,
            ..s.clone()
        };
        let h = flat_harvester();
        let mc = MonteCarloSettings {
            n_samples: 1_000_000,
            seed: 42,
            quantiles: vec![],
        };
        let stats = estimate_harvest(&s, &h, &mc).unwrap();
        let reference = estimate_harvest(&aligned, &h, &MonteCarloSettings { n_samples: 1, ..mc.clone() })
            .unwrap()
            .mean_uw;
        let m = derive_model(&geom);
        let ratio = stats.mean_uw / reference;
        // Var[m] = a0²·xi/(xi+2) − E[m]²
        let var = m.a0 * m.a0 * m.xi / (m.xi + 2.0) - m.mean_fraction().powi(2);
        let se = (var / mc.n_samples as f64).sqrt();
        assert!(
            (ratio - m.mean_fraction()).abs() < 3.0 * se,
            "ratio {ratio} vs {} (se {se})",
            m.mean_fraction()
        );
    }

    #[test]
    fn rayleigh_fading_preserves_mean_linear_power() {
        let base = LinkScenario {
            shadowing: ShadowingMode::Median,
            ..LinkScenario::default()
        };
        let faded = LinkScenario {
            small_scale: SmallScaleFading::Rayleigh,
            ..base.clone()
        };
        let mc = MonteCarloSettings {
            n_samples: 1_000_000,
            seed: 9,
            quantiles: vec![],
        };
        let c = HarvesterModel::harvester_c();
        let off = estimate_harvest(&base, &c, &mc).unwrap().mean_p_rx_mw;
        let on = estimate_harvest(&faded, &c, &mc).unwrap().mean_p_rx_mw;
        // exponential gain: SE of the mean is off/√n
        let se = off / (mc.n_samples as f64).sqrt();
        assert!((on - off).abs() < 3.0 * se, "{on} vs {off}");
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = LinkScenario {
            pointing: Some(PointingGeometry::new(0.5, 0.86, 0.6).unwrap()),
            small_scale: SmallScaleFading::Rayleigh,
            ..LinkScenario::default()
        };
        let mc = MonteCarloSettings {
            n_samples: 50_000,
            seed: 31,
            quantiles: vec![0.05, 0.25, 0.95],
        };
        let a = HarvesterModel::harvester_a();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_harvest(&s, &a, &mc).unwrap())
        };
        let one = run(1);
        let eight = run(8);
        assert_eq!(one, eight);
        assert_eq!(one.mean_uw.to_bits(), eight.mean_uw.to_bits());
    }

    #[test]
    fn quantiles_are_monotone() {
        let mc = MonteCarloSettings {
            n_samples: 20_000,
            seed: 3,
            quantiles: vec![0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99],
        };
        let stats =
            estimate_harvest(&LinkScenario::default(), &HarvesterModel::harvester_a(), &mc).unwrap();
        for w in stats.quantiles.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
        assert_eq!(stats.quantile(0.5), Some(stats.median_uw));
        assert!(stats.quantiles.iter().all(|&(_, v)| v >= 0.0));
        assert_eq!(stats.n_samples, 20_000);
        assert_eq!(stats.seed, 3);
    }

    #[test]
    fn interpolated_quantile() {
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&data, 0.5), 2.5);
        assert_eq!(quantile_sorted(&data, 0.0), 1.0);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }
}
