//! Flat key-value run configuration.
//!
//! Keys carry their unit in the name (`distance_m`, `p_tx_w`, ...). Every
//! key is optional; missing keys fall back to the default scenario. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use marswpt::link::{ShadowingMode, SmallScaleFading};
use marswpt::pointing::DEFAULT_WAIST_WAVELENGTHS;
use marswpt::sweep::{self, AxisPoints, SecondaryAxis, Spacing, SweepAxis};
use marswpt::{
    DustStorm, HarvesterModel, LinkScenario, MonteCarloSettings, PointingGeometry, RfCarrier,
    SweepSpec, TerrainProfile,
};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // terrain
    pub area: Option<String>,
    pub alpha: Option<f64>,
    pub sigma_db: Option<f64>,
    // link
    pub frequency_hz: Option<f64>,
    pub p_tx_w: Option<f64>,
    pub g_t_db: Option<f64>,
    pub g_r_db: Option<f64>,
    pub distance_m: Option<f64>,
    pub shadowing: Option<ShadowingMode>,
    pub small_scale: Option<SmallScaleFading>,
    // dust
    pub n_t_per_m3: Option<f64>,
    pub rho_p_m: Option<f64>,
    pub eps_re: Option<f64>,
    pub eps_im: Option<f64>,
    // pointing
    pub beta_m: Option<f64>,
    pub r_d_m: Option<f64>,
    pub sigma_s_m: Option<f64>,
    // monte carlo
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    pub quantiles: Option<Vec<f64>>,
    // harvesters
    pub harvesters: Option<Vec<String>>,
    pub harvester_files: Option<Vec<PathBuf>>,
    // sweep
    pub preset: Option<String>,
    pub axis: Option<String>,
    pub axis_points: Option<Vec<f64>>,
    pub axis_min: Option<f64>,
    pub axis_max: Option<f64>,
    pub axis_count: Option<usize>,
    pub axis_spacing: Option<Spacing>,
    pub secondary: Option<String>,
    pub secondary_values: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str, source: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            format!("{source}: line {line}: {}", e.message())
        })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Values set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(self, other;
            area, alpha, sigma_db, frequency_hz, p_tx_w, g_t_db, g_r_db, distance_m,
            shadowing, small_scale, n_t_per_m3, rho_p_m, eps_re, eps_im, beta_m, r_d_m,
            sigma_s_m, n_samples, seed, quantiles, harvesters, harvester_files, preset,
            axis, axis_points, axis_min, axis_max, axis_count, axis_spacing, secondary,
            secondary_values,
        );
    }

    fn terrain(&self, base: &TerrainProfile, errs: &mut Vec<String>) -> TerrainProfile {
        let mut t = match &self.area {
            Some(name) => TerrainProfile::preset(name).unwrap_or_else(|| {
                errs.push(format!("area must be `area1` or `area2`, got `{name}`"));
                base.clone()
            }),
            None => base.clone(),
        };
        if self.alpha.is_some() || self.sigma_db.is_some() {
            if self.area.is_none() {
                t.name = "custom".into();
            }
            t.alpha = self.alpha.unwrap_or(t.alpha);
            t.sigma_db = self.sigma_db.unwrap_or(t.sigma_db);
        }
        t
    }

    /// Applies the scenario keys on top of `base`. Collects every problem.
    pub fn scenario_from(&self, base: &LinkScenario) -> Result<LinkScenario, Vec<String>> {
        let mut errs = Vec::new();
        // keys already reported as missing, so their NaN placeholders stay quiet
        let mut missing: Vec<&str> = Vec::new();
        let mut s = base.clone();
        if let Some(f) = self.frequency_hz {
            match RfCarrier::new(f) {
                Ok(c) => s.carrier = c,
                Err(_) => errs.push(format!("frequency_hz must be > 0, got {f}")),
            }
        }
        s.terrain = self.terrain(&base.terrain, &mut errs);
        s.p_tx_w = self.p_tx_w.unwrap_or(s.p_tx_w);
        s.g_t_db = self.g_t_db.unwrap_or(s.g_t_db);
        s.g_r_db = self.g_r_db.unwrap_or(s.g_r_db);
        s.distance_m = self.distance_m.unwrap_or(s.distance_m);
        s.shadowing = self.shadowing.unwrap_or(s.shadowing);
        s.small_scale = self.small_scale.unwrap_or(s.small_scale);

        let dust_keys = [self.n_t_per_m3, self.rho_p_m, self.eps_re, self.eps_im];
        if dust_keys.iter().any(Option::is_some) {
            let mut d = s.dust.clone().unwrap_or(DustStorm {
                eps_re: DustStorm::DEFAULT_EPS.0,
                eps_im: DustStorm::DEFAULT_EPS.1,
                n_t: 0.0,
                rho_p: f64::NAN,
            });
            d.n_t = self.n_t_per_m3.unwrap_or(d.n_t);
            d.rho_p = self.rho_p_m.unwrap_or(d.rho_p);
            d.eps_re = self.eps_re.unwrap_or(d.eps_re);
            d.eps_im = self.eps_im.unwrap_or(d.eps_im);
            if d.rho_p.is_nan() {
                errs.push("rho_p_m is required when dust is configured".into());
                missing.push("rho_p_m");
            }
            s.dust = Some(d);
        }

        let pointing_keys = [self.beta_m, self.r_d_m, self.sigma_s_m];
        if pointing_keys.iter().any(Option::is_some) {
            let mut p = s.pointing.clone().unwrap_or(PointingGeometry {
                beta: f64::NAN,
                r_d: DEFAULT_WAIST_WAVELENGTHS * s.carrier.wavelength_m(),
                sigma_s: 0.0,
            });
            p.beta = self.beta_m.unwrap_or(p.beta);
            p.r_d = self.r_d_m.unwrap_or(p.r_d);
            p.sigma_s = self.sigma_s_m.unwrap_or(p.sigma_s);
            if p.beta.is_nan() {
                errs.push("beta_m is required when pointing error is configured".into());
                missing.push("beta_m");
            }
            s.pointing = Some(p);
        }

        errs.extend(
            s.violations()
                .into_iter()
                .filter(|v| !missing.iter().any(|k| v.starts_with(k))),
        );
        if errs.is_empty() {
            Ok(s)
        } else {
            Err(errs)
        }
    }

    pub fn monte_carlo_from(&self, base: &MonteCarloSettings) -> Result<MonteCarloSettings, Vec<String>> {
        let mc = MonteCarloSettings {
            n_samples: self.n_samples.unwrap_or(base.n_samples),
            seed: self.seed.unwrap_or(base.seed),
            quantiles: self.quantiles.clone().unwrap_or_else(|| base.quantiles.clone()),
        };
        let v = mc.violations();
        if v.is_empty() {
            Ok(mc)
        } else {
            Err(v)
        }
    }

    /// Built-in names plus any model files, in that order.
    pub fn harvester_models(&self, default: &[HarvesterModel]) -> Result<Vec<HarvesterModel>, Vec<String>> {
        let mut errs = Vec::new();
        let mut models = Vec::new();
        match &self.harvesters {
            Some(names) => {
                for n in names {
                    match HarvesterModel::builtin(n) {
                        Some(m) => models.push(m),
                        None => errs.push(format!("unknown harvester `{n}`, expected A, B or C")),
                    }
                }
            }
            None if self.harvester_files.is_none() => models.extend_from_slice(default),
            None => {}
        }
        for path in self.harvester_files.iter().flatten() {
            match HarvesterModel::load(path) {
                Ok(m) => models.push(m),
                Err(e) => errs.push(format!("harvester file {}: {e}", path.display())),
            }
        }
        if errs.is_empty() {
            Ok(models)
        } else {
            Err(errs)
        }
    }

    /// Sweep spec starting from `preset` (when given) and overriding any
    /// scenario, Monte Carlo, harvester and axis keys that are set.
    pub fn sweep_spec(&self) -> Result<SweepSpec, Vec<String>> {
        let mut errs = Vec::new();
        let base_spec = match &self.preset {
            Some(name) => match sweep::preset(name) {
                Some(p) => Some(p),
                None => {
                    return Err(vec![format!(
                        "unknown preset `{name}`; valid presets: {}",
                        sweep::PRESET_NAMES.join(", ")
                    )])
                }
            },
            None => None,
        };
        if base_spec.is_none() && self.axis.is_none() {
            return Err(vec!["a sweep needs either `preset` or `axis`".into()]);
        }
        let default_scenario = base_spec
            .as_ref()
            .map(|p| p.base.clone())
            .unwrap_or_default();
        let default_mc = base_spec.as_ref().map(|p| p.mc.clone()).unwrap_or_default();

        let base = self.scenario_from(&default_scenario).unwrap_or_else(|e| {
            errs.extend(e);
            default_scenario.clone()
        });
        let mc = self.monte_carlo_from(&default_mc).unwrap_or_else(|e| {
            errs.extend(e);
            default_mc.clone()
        });
        let harvesters = self
            .harvester_models(&HarvesterModel::builtins())
            .unwrap_or_else(|e| {
                errs.extend(e);
                Vec::new()
            });

        let axis = match &self.axis {
            Some(a) => SweepAxis::parse(a).unwrap_or_else(|| {
                errs.push(format!(
                    "axis must be one of p_tx, distance, dust_density, jitter_sigma, got `{a}`"
                ));
                SweepAxis::PTx
            }),
            None => base_spec.as_ref().map(|p| p.axis).unwrap_or(SweepAxis::PTx),
        };

        let range_keys = [self.axis_min.is_some(), self.axis_max.is_some(), self.axis_count.is_some()];
        let points = if let Some(pts) = &self.axis_points {
            if range_keys.iter().any(|&k| k) {
                errs.push("give either axis_points or axis_min/axis_max/axis_count, not both".into());
            }
            AxisPoints::Explicit(pts.clone())
        } else if range_keys.iter().any(|&k| k) || self.axis_spacing.is_some() {
            let (dmin, dmax, dcount, dspacing) = match base_spec.as_ref().map(|p| &p.points) {
                Some(AxisPoints::Range { min, max, count, spacing }) => (Some(*min), Some(*max), *count, *spacing),
                _ => (None, None, 25, Spacing::Linear),
            };
            match (self.axis_min.or(dmin), self.axis_max.or(dmax)) {
                (Some(min), Some(max)) => AxisPoints::Range {
                    min,
                    max,
                    count: self.axis_count.unwrap_or(dcount),
                    spacing: self.axis_spacing.unwrap_or(dspacing),
                },
                _ => {
                    errs.push("axis_min and axis_max are required for a ranged axis".into());
                    AxisPoints::Explicit(vec![])
                }
            }
        } else {
            match &base_spec {
                Some(p) => p.points.clone(),
                None => {
                    errs.push("axis needs axis_points or axis_min/axis_max".into());
                    AxisPoints::Explicit(vec![])
                }
            }
        };

        let secondary = match (&self.secondary, &self.secondary_values) {
            (Some(name), Some(vals)) => match name.as_str() {
                "rho_p" => Some(SecondaryAxis::RhoP(vals.clone())),
                "beta" => Some(SecondaryAxis::Beta(vals.clone())),
                "none" => None,
                other => {
                    errs.push(format!("secondary must be rho_p, beta or none, got `{other}`"));
                    None
                }
            },
            (Some(name), None) if name == "none" => None,
            (Some(_), None) => {
                errs.push("secondary needs secondary_values".into());
                None
            }
            (None, Some(vals)) => match base_spec.as_ref().and_then(|p| p.secondary.as_ref()) {
                Some(SecondaryAxis::RhoP(_)) => Some(SecondaryAxis::RhoP(vals.clone())),
                Some(SecondaryAxis::Beta(_)) => Some(SecondaryAxis::Beta(vals.clone())),
                None => {
                    errs.push("secondary_values given without secondary".into());
                    None
                }
            },
            (None, None) => base_spec.as_ref().and_then(|p| p.secondary.clone()),
        };

        if !errs.is_empty() {
            return Err(errs);
        }
        let spec = SweepSpec {
            name: self
                .preset
                .clone()
                .unwrap_or_else(|| format!("custom-{}", axis.name())),
            base,
            harvesters,
            axis,
            points,
            secondary,
            mc,
        };
        let v = spec.violations();
        if v.is_empty() {
            Ok(spec)
        } else {
            Err(v)
        }
    }
}
