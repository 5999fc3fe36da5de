//! Parameter sweeps over a single scenario axis, with an optional secondary
//! parameter, for a set of harvesters.
//!
//! All rows of a sweep share the Monte Carlo seed: sample `i` of every row
//! uses the same random stream. Curves across the axis are then driven by
//! the same channel realisations and differ only through the swept
//! parameter.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harvester::HarvesterModel;
use crate::link::{estimate_harvest, HarvestStats, LinkScenario, MonteCarloSettings, ShadowingMode};
use crate::pointing::PointingGeometry;
use crate::propagation::{DustStorm, TerrainProfile};
use crate::quantities::RfCarrier;

/// Probabilities always reported in sweep tables.
pub const CSV_QUANTILES: [f64; 2] = [0.05, 0.95];

pub const PRESET_NAMES: [&str; 8] = [
    "fig3a", "fig3b", "fig5a", "fig5b", "fig6a", "fig6b", "fig7a", "fig7b",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PTx,
    Distance,
    DustDensity,
    JitterSigma,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PTx => "p_tx",
            SweepAxis::Distance => "distance",
            SweepAxis::DustDensity => "dust_density",
            SweepAxis::JitterSigma => "jitter_sigma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "p_tx" => Some(SweepAxis::PTx),
            "distance" => Some(SweepAxis::Distance),
            "dust_density" => Some(SweepAxis::DustDensity),
            "jitter_sigma" => Some(SweepAxis::JitterSigma),
            _ => None,
        }
    }

    fn value_problem(self, v: f64) -> Option<String> {
        let ok = match self {
            SweepAxis::PTx | SweepAxis::Distance => v > 0.0 && v.is_finite(),
            SweepAxis::DustDensity | SweepAxis::JitterSigma => v >= 0.0 && v.is_finite(),
        };
        let bound = match self {
            SweepAxis::PTx | SweepAxis::Distance => "> 0",
            _ => ">= 0",
        };
        (!ok).then(|| format!("{} axis values must be {bound}, got {v}", self.name()))
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisPoints {
    Explicit(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        count: usize,
        spacing: Spacing,
    },
}

impl AxisPoints {
    pub fn values(&self) -> Vec<f64> {
        match self {
            AxisPoints::Explicit(v) => v.clone(),
            AxisPoints::Range {
                min,
                max,
                count,
                spacing,
            } => {
                let n = *count;
                if n == 1 {
                    return vec![*min];
                }
                (0..n)
                    .map(|i| {
                        let t = i as f64 / (n - 1) as f64;
                        if i == n - 1 {
                            return *max;
                        }
                        match spacing {
                            Spacing::Linear => min + (max - min) * t,
                            Spacing::Log => 10f64.powf(min.log10() + (max.log10() - min.log10()) * t),
                        }
                    })
                    .collect()
            }
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let AxisPoints::Range {
            min,
            max,
            count,
            spacing,
        } = self
        {
            if *count == 0 {
                v.push("axis point count must be >= 1".into());
            }
            if *spacing == Spacing::Log && !(*min > 0.0) {
                v.push(format!("log-spaced axis needs min > 0, got {min}"));
            }
            if *count > 1 && !(max > min) {
                v.push(format!("axis max must exceed min, got [{min}, {max}]"));
            }
            if !v.is_empty() {
                return v;
            }
        }
        let pts = self.values();
        if pts.is_empty() {
            v.push("axis points must be non-empty".into());
        }
        if pts.windows(2).any(|w| !(w[1] > w[0])) {
            v.push("axis points must be strictly increasing".into());
        }
        v
    }
}

/// Second parameter varied inside each axis point.
#[derive(Debug, Clone, PartialEq)]
pub enum SecondaryAxis {
    /// Mean dust particle radius (m).
    RhoP(Vec<f64>),
    /// Receiver aperture radius (m).
    Beta(Vec<f64>),
}

impl SecondaryAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SecondaryAxis::RhoP(_) => "rho_p",
            SecondaryAxis::Beta(_) => "beta",
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            SecondaryAxis::RhoP(v) | SecondaryAxis::Beta(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    pub base: LinkScenario,
    pub harvesters: Vec<HarvesterModel>,
    pub axis: SweepAxis,
    pub points: AxisPoints,
    pub secondary: Option<SecondaryAxis>,
    pub mc: MonteCarloSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub axis_value: f64,
    /// Secondary parameter name and value, when the sweep has one.
    pub secondary: Option<(&'static str, f64)>,
    pub area: String,
    pub harvester: String,
    pub p_tx_w: f64,
    pub distance_m: f64,
    pub stats: HarvestStats,
}

impl SweepSpec {
    /// Scenario for one axis point and optional secondary value.
    pub fn scenario_at(&self, axis_value: f64, secondary: Option<f64>) -> LinkScenario {
        let mut s = self.base.clone();
        match self.axis {
            SweepAxis::PTx => s.p_tx_w = axis_value,
            SweepAxis::Distance => s.distance_m = axis_value,
            SweepAxis::DustDensity => {
                if let Some(d) = s.dust.as_mut() {
                    d.n_t = axis_value;
                }
            }
            SweepAxis::JitterSigma => {
                if let Some(p) = s.pointing.as_mut() {
                    p.sigma_s = axis_value;
                }
            }
        }
        match (&self.secondary, secondary) {
            (Some(SecondaryAxis::RhoP(_)), Some(v)) => {
                if let Some(d) = s.dust.as_mut() {
                    d.rho_p = v;
                }
            }
            (Some(SecondaryAxis::Beta(_)), Some(v)) => {
                if let Some(p) = s.pointing.as_mut() {
                    p.beta = v;
                }
            }
            _ => {}
        }
        s
    }

    fn secondary_values(&self) -> Vec<Option<f64>> {
        match &self.secondary {
            Some(sec) => sec.values().iter().copied().map(Some).collect(),
            None => vec![None],
        }
    }

    /// Every problem with the spec, empty when it can run.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.harvesters.is_empty() {
            v.push("harvester list must not be empty".into());
        }
        for h in &self.harvesters {
            if let Err(e) = h.validate() {
                v.push(e.to_string());
            }
        }
        v.extend(self.points.violations());
        v.extend(self.mc.violations());
        v.extend(self.base.violations());
        match self.axis {
            SweepAxis::DustDensity if self.base.dust.is_none() => {
                v.push("dust_density axis needs a dust storm in the base scenario".into())
            }
            SweepAxis::JitterSigma if self.base.pointing.is_none() => {
                v.push("jitter_sigma axis needs a pointing geometry in the base scenario".into())
            }
            _ => {}
        }
        match &self.secondary {
            Some(SecondaryAxis::RhoP(vals)) => {
                if self.base.dust.is_none() {
                    v.push("rho_p secondary axis needs a dust storm in the base scenario".into());
                }
                if vals.is_empty() {
                    v.push("rho_p secondary values must not be empty".into());
                }
                for &r in vals {
                    if !(r > 0.0 && r.is_finite()) {
                        v.push(format!("rho_p values must be > 0, got {r}"));
                    }
                }
            }
            Some(SecondaryAxis::Beta(vals)) => {
                if self.base.pointing.is_none() {
                    v.push("beta secondary axis needs a pointing geometry in the base scenario".into());
                }
                if vals.is_empty() {
                    v.push("beta secondary values must not be empty".into());
                }
                for &b in vals {
                    if !(b > 0.0 && b.is_finite()) {
                        v.push(format!("beta values must be > 0, got {b}"));
                    }
                }
            }
            None => {}
        }
        if self.points.violations().is_empty() {
            for x in self.points.values() {
                if let Some(p) = self.axis.value_problem(x) {
                    v.push(p);
                }
            }
        }
        v
    }

    pub fn row_count(&self) -> usize {
        self.points.values().len() * self.secondary_values().len() * self.harvesters.len()
    }
}

/// Runs every (axis point, secondary value, harvester) combination in that
/// nesting order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let problems = spec.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut mc = spec.mc.clone();
    for q in CSV_QUANTILES {
        if !mc.quantiles.contains(&q) {
            mc.quantiles.push(q);
        }
    }
    let mut rows = Vec::with_capacity(spec.row_count());
    for x in spec.points.values() {
        for sec in spec.secondary_values() {
            let scenario = spec.scenario_at(x, sec);
            for h in &spec.harvesters {
                let stats = estimate_harvest(&scenario, h, &mc)?;
                rows.push(SweepRow {
                    axis: spec.axis,
                    axis_value: x,
                    secondary: spec
                        .secondary
                        .as_ref()
                        .zip(sec)
                        .map(|(s, v)| (s.name(), v)),
                    area: scenario.terrain.name.clone(),
                    harvester: h.name.clone(),
                    p_tx_w: scenario.p_tx_w,
                    distance_m: scenario.distance_m,
                    stats,
                });
            }
        }
    }
    Ok(rows)
}

fn figure_base(terrain: TerrainProfile) -> LinkScenario {
    LinkScenario {
        terrain,
        shadowing: ShadowingMode::Median,
        ..LinkScenario::default()
    }
}

fn area(letter: char) -> TerrainProfile {
    if letter == 'a' {
        TerrainProfile::area1()
    } else {
        TerrainProfile::area2()
    }
}

/// The figure presets: harvested power versus transmit power (fig3),
/// dust density for two particle sizes (fig5), distance (fig6) and pointing
/// jitter for two aperture radii (fig7). Suffix `a` is Area 1, `b` Area 2.
///
/// Shadowing is pinned at its median in every preset; pass a spec with
/// [`ShadowingMode::Sampled`] to average over it instead.
pub fn builtin_presets() -> Vec<SweepSpec> {
    PRESET_NAMES
        .iter()
        .map(|n| preset(n).expect("every listed preset is defined"))
        .collect()
}

pub fn preset(name: &str) -> Option<SweepSpec> {
    let mut chars = name.strip_prefix("fig")?.chars();
    let fig = chars.next()?;
    let letter = chars.next()?;
    if chars.next().is_some() || !matches!(letter, 'a' | 'b') {
        return None;
    }
    let carrier = RfCarrier::default();
    let base = figure_base(area(letter));
    let (base, axis, points, secondary) = match fig {
        '3' => (
            base,
            SweepAxis::PTx,
            AxisPoints::Range {
                min: 1.0,
                max: 100.0,
                count: 25,
                spacing: Spacing::Log,
            },
            None,
        ),
        '5' => (
            LinkScenario {
                dust: Some(DustStorm::new(1.0, 1e-4).expect("valid storm")),
                ..base
            },
            SweepAxis::DustDensity,
            AxisPoints::Range {
                min: 1.0,
                max: 1e4,
                count: 25,
                spacing: Spacing::Log,
            },
            Some(SecondaryAxis::RhoP(vec![1e-4, 5e-3])),
        ),
        '6' => (
            base,
            SweepAxis::Distance,
            AxisPoints::Range {
                min: 10.0,
                max: 100.0,
                count: 25,
                spacing: Spacing::Linear,
            },
            None,
        ),
        '7' => (
            LinkScenario {
                pointing: Some(
                    PointingGeometry::with_default_waist(0.5, 0.1, carrier.wavelength_m())
                        .expect("valid geometry"),
                ),
                ..base
            },
            SweepAxis::JitterSigma,
            AxisPoints::Range {
                min: 0.1,
                max: 1.0,
                count: 25,
                spacing: Spacing::Linear,
            },
            Some(SecondaryAxis::Beta(vec![0.5, 1.0])),
        ),
        _ => return None,
    };
    Some(SweepSpec {
        name: name.to_string(),
        base,
        harvesters: HarvesterModel::builtins(),
        axis,
        points,
        secondary,
        mc: MonteCarloSettings::default(),
    })
}

/// Flat CSV form of a [`SweepRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub axis: String,
    pub axis_value: f64,
    pub secondary: String,
    pub secondary_value: Option<f64>,
    pub area: String,
    pub harvester: String,
    pub p_tx_w: f64,
    pub distance_m: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub p_rx_median_dbm: f64,
    pub p_h_mean_uw: f64,
    pub p_h_median_uw: f64,
    pub p_h_p05_uw: f64,
    pub p_h_p95_uw: f64,
    pub clamp_count: usize,
    pub extrapolated_count: usize,
}

pub const CSV_HEADER: &str = "axis,axis_value,secondary,secondary_value,area,harvester,p_tx_w,distance_m,n_samples,seed,p_rx_median_dbm,p_h_mean_uw,p_h_median_uw,p_h_p05_uw,p_h_p95_uw,clamp_count,extrapolated_count";

impl From<&SweepRow> for SweepRecord {
    fn from(r: &SweepRow) -> Self {
        let q = |p: f64| r.stats.quantile(p).unwrap_or(f64::NAN);
        SweepRecord {
            axis: r.axis.name().to_string(),
            axis_value: r.axis_value,
            secondary: r.secondary.map(|(n, _)| n.to_string()).unwrap_or_default(),
            secondary_value: r.secondary.map(|(_, v)| v),
            area: r.area.clone(),
            harvester: r.harvester.clone(),
            p_tx_w: r.p_tx_w,
            distance_m: r.distance_m,
            n_samples: r.stats.n_samples,
            seed: r.stats.seed,
            p_rx_median_dbm: r.stats.median_p_rx_dbm,
            p_h_mean_uw: r.stats.mean_uw,
            p_h_median_uw: r.stats.median_uw,
            p_h_p05_uw: q(0.05),
            p_h_p95_uw: q(0.95),
            clamp_count: r.stats.clamp_count,
            extrapolated_count: r.stats.extrapolated_count,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(SweepRecord::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Parse {
            path: "<csv>".into(),
            line: 1,
            message: format!("unexpected header `{header}`"),
        });
    }
    Ok(rdr.deserialize().collect::<Result<Vec<SweepRecord>, _>>()?)
}
