//! Nonlinear RF-to-DC conversion.
//!
//! Efficiency is a degree-(2, 3) rational function of the incident power in
//! milliwatts and evaluates to a percentage:
//!
//! ```text
//!          a2·P² + a1·P + a0
//! η(P) = ---------------------
//!        P³ + b2·P² + b1·P + b0
//! ```
//!
//! Rational fits extrapolate badly, so the evaluated efficiency is clamped to
//! `[0, 100]` and inputs outside the model's validated range are flagged.

mod fit;

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{fit_model, FitReport, MAX_REFINE_ITERATIONS, REFINE_TOLERANCE};

/// Number of log-spaced points used to certify the denominator over the
/// valid range.
const DENOMINATOR_CHECK_POINTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvesterModel {
    pub name: String,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    pub b2: f64,
    pub b1: f64,
    pub b0: f64,
    pub valid_min_mw: f64,
    pub valid_max_mw: f64,
}

/// Evaluated efficiency together with whether the clamp was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    pub percent: f64,
    pub clamped: bool,
}

/// One measured point of an efficiency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySample {
    pub input_power_mw: f64,
    pub efficiency_percent: f64,
}

impl EfficiencySample {
    pub fn new(input_power_mw: f64, efficiency_percent: f64) -> Result<Self> {
        if !(input_power_mw > 0.0 && input_power_mw.is_finite()) {
            return Err(Error::domain(format!(
                "input_power_mw must be > 0, got {input_power_mw}"
            )));
        }
        if !(0.0..=100.0).contains(&efficiency_percent) {
            return Err(Error::domain(format!(
                "efficiency_percent must lie in [0, 100], got {efficiency_percent}"
            )));
        }
        Ok(EfficiencySample {
            input_power_mw,
            efficiency_percent,
        })
    }
}

impl HarvesterModel {
    /// Builds a model and certifies that the denominator stays positive over
    /// `[valid_min_mw, valid_max_mw]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        numerator: [f64; 3],
        denominator: [f64; 3],
        valid_min_mw: f64,
        valid_max_mw: f64,
    ) -> Result<Self> {
        let model = HarvesterModel {
            name: name.into(),
            a2: numerator[0],
            a1: numerator[1],
            a0: numerator[2],
            b2: denominator[0],
            b1: denominator[1],
            b0: denominator[2],
            valid_min_mw,
            valid_max_mw,
        };
        model.validate()?;
        Ok(model)
    }

    /// Discrete Schottky-diode rectifier, mid-power design.
    pub fn harvester_a() -> Self {
        Self::builtin_unchecked("A", [100.1, 181.2, -4.43e-2], [-6.74e-2, 3.185, 10.1e-2], 0.03, 10.0)
    }

    /// Discrete rectifier tuned for high input power.
    pub fn harvester_b() -> Self {
        Self::builtin_unchecked("B", [-5.28e3, 9.46e5, -2.04e4], [-150.6, 1.292e4, 9874.0], 1.0, 300.0)
    }

    /// CMOS rectifier for low input power.
    pub fn harvester_c() -> Self {
        Self::builtin_unchecked("C", [114.6, -1.613, 7.66e-3], [1.133, 9.84e-3, 4.5e-3], 1e-4, 3.0)
    }

    pub fn builtins() -> Vec<Self> {
        vec![Self::harvester_a(), Self::harvester_b(), Self::harvester_c()]
    }

    /// Looks up a built-in harvester by name (`A`, `B` or `C`, any case).
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "A" => Some(Self::harvester_a()),
            "B" => Some(Self::harvester_b()),
            "C" => Some(Self::harvester_c()),
            _ => None,
        }
    }

    fn builtin_unchecked(name: &str, num: [f64; 3], den: [f64; 3], lo: f64, hi: f64) -> Self {
        HarvesterModel {
            name: name.into(),
            a2: num[0],
            a1: num[1],
            a0: num[2],
            b2: den[0],
            b1: den[1],
            b0: den[2],
            valid_min_mw: lo,
            valid_max_mw: hi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.a2, self.a1, self.a0, self.b2, self.b1, self.b0];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config(vec![format!(
                "harvester `{}` has non-finite coefficients",
                self.name
            )]));
        }
        if !(self.valid_min_mw > 0.0 && self.valid_min_mw < self.valid_max_mw)
            || !self.valid_max_mw.is_finite()
        {
            return Err(Error::Config(vec![format!(
                "harvester `{}`: valid range must satisfy 0 < min < max, got [{}, {}]",
                self.name, self.valid_min_mw, self.valid_max_mw
            )]));
        }
        let (lo, hi) = (self.valid_min_mw.ln(), self.valid_max_mw.ln());
        let n = DENOMINATOR_CHECK_POINTS;
        for i in 0..n {
            let p = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
            if self.denominator(p) <= 0.0 {
                return Err(Error::Evaluation {
                    model: self.name.clone(),
                    p_mw: p,
                });
            }
        }
        Ok(())
    }

    pub fn numerator(&self, p: f64) -> f64 {
        (self.a2 * p + self.a1) * p + self.a0
    }

    pub fn denominator(&self, p: f64) -> f64 {
        ((p + self.b2) * p + self.b1) * p + self.b0
    }

    /// Unclamped model output in percent.
    pub fn raw_efficiency(&self, p_rx_mw: f64) -> Result<f64> {
        if !(p_rx_mw >= 0.0) {
            return Err(Error::domain(format!(
                "incident power must be >= 0 mW, got {p_rx_mw}"
            )));
        }
        let den = self.denominator(p_rx_mw);
        if den <= 0.0 {
            return Err(Error::Evaluation {
                model: self.name.clone(),
                p_mw: p_rx_mw,
            });
        }
        Ok(self.numerator(p_rx_mw) / den)
    }

    pub fn efficiency(&self, p_rx_mw: f64) -> Result<Efficiency> {
        let raw = self.raw_efficiency(p_rx_mw)?;
        let percent = raw.clamp(0.0, 100.0);
        Ok(Efficiency {
            percent,
            clamped: percent != raw,
        })
    }

    /// Conversion efficiency in percent, clamped to `[0, 100]`.
    pub fn efficiency_percent(&self, p_rx_mw: f64) -> Result<f64> {
        Ok(self.efficiency(p_rx_mw)?.percent)
    }

    /// DC power delivered for `p_rx_mw` of incident RF power.
    pub fn harvested_mw(&self, p_rx_mw: f64) -> Result<f64> {
        Ok(p_rx_mw * self.efficiency_percent(p_rx_mw)? / 100.0)
    }

    pub fn is_extrapolated(&self, p_rx_mw: f64) -> bool {
        p_rx_mw < self.valid_min_mw || p_rx_mw > self.valid_max_mw
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("harvester model always serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let model: HarvesterModel = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: "<model>".into(),
                line,
                message: e.message().to_string(),
            }
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

impl fmt::Display for HarvesterModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: a2={} a1={} a0={} b2={} b1={} b0={} valid=[{}, {}] mW",
            self.name,
            self.a2,
            self.a1,
            self.a0,
            self.b2,
            self.b1,
            self.b0,
            self.valid_min_mw,
            self.valid_max_mw
        )
    }
}

/// Reads `input_power_mw,efficiency_percent` samples. A header row is
/// required. Errors carry the 1-based line number.
pub fn read_samples_csv<R: Read>(reader: R, source: &str) -> Result<Vec<EfficiencySample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let expected = ["input_power_mw", "efficiency_percent"];
    if headers.len() != 2 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(
            1,
            format!(
                "expected header `input_power_mw,efficiency_percent`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("column {}: {e}", expected[i])))
        };
        let sample = EfficiencySample::new(field(0)?, field(1)?)
            .map_err(|e| parse_err(line, e.to_string()))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn read_samples_file(path: &Path) -> Result<Vec<EfficiencySample>> {
    let file = std::fs::File::open(path)?;
    read_samples_csv(file, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtins_are_certified() {
        for m in HarvesterModel::builtins() {
            m.validate().unwrap();
        }
        assert_eq!(HarvesterModel::builtin("b"), Some(HarvesterModel::harvester_b()));
        assert_eq!(HarvesterModel::builtin("D"), None);
    }

    #[test]
    fn builtin_coefficients() {
        let a = HarvesterModel::harvester_a();
        assert_eq!(
            [a.a2, a.a1, a.a0, a.b2, a.b1, a.b0],
            [100.1, 181.2, -4.43e-2, -6.74e-2, 3.185, 10.1e-2]
        );
        let b = HarvesterModel::harvester_b();
        assert_eq!(
            [b.a2, b.a1, b.a0, b.b2, b.b1, b.b0],
            [-5.28e3, 9.46e5, -2.04e4, -150.6, 1.292e4, 9874.0]
        );
        let c = HarvesterModel::harvester_c();
        assert_eq!(
            [c.a2, c.a1, c.a0, c.b2, c.b1, c.b0],
            [114.6, -1.613, 7.66e-3, 1.133, 9.84e-3, 4.5e-3]
        );
    }

    #[test]
    fn efficiency_reference_points() {
        let a = HarvesterModel::harvester_a();
        // 281.2557 / 4.2186
        assert!((a.efficiency_percent(1.0).unwrap() - 66.670_388).abs() < 1e-5);
        let low = a.efficiency(0.0).unwrap();
        assert!((a.raw_efficiency(0.0).unwrap() + 0.438_614).abs() < 1e-6);
        assert_eq!(low.percent, 0.0);
        assert!(low.clamped);
        let c = HarvesterModel::harvester_c();
        assert!((c.efficiency_percent(0.0).unwrap() - 1.702_222).abs() < 1e-6);
        assert!(!c.efficiency(0.0).unwrap().clamped);
    }

    #[test]
    fn harvested_power() {
        let c = HarvesterModel::harvester_c();
        assert_eq!(c.harvested_mw(0.0).unwrap(), 0.0);
        // η_C(0.0858393599) = 49.814441 %
        let p = 0.085_839_359_9;
        assert!((c.efficiency_percent(p).unwrap() - 49.814_441).abs() < 1e-5);
        assert!((c.harvested_mw(p).unwrap() - 0.042_760_397).abs() < 1e-8);
        assert!(c.harvested_mw(-1.0).is_err());
    }

    #[test]
    fn negative_denominator_is_an_error() {
        let m = HarvesterModel {
            b0: -1.0,
            ..HarvesterModel::harvester_c()
        };
        assert!(matches!(m.raw_efficiency(0.0), Err(Error::Evaluation { .. })));
        assert!(m.validate().is_err());
        assert!(HarvesterModel::new("bad", [1.0, 1.0, 1.0], [0.0, 0.0, -5.0], 0.1, 1.0).is_err());
        assert!(HarvesterModel::new("bad", [1.0, 1.0, 1.0], [1.0, 1.0, 1.0], 2.0, 1.0).is_err());
    }

    #[test]
    fn rolloff_above_peak() {
        for m in HarvesterModel::builtins() {
            let grid: Vec<f64> = (0..=900).map(|i| 10f64.powf(-5.0 + i as f64 / 100.0)).collect();
            let eff: Vec<f64> = grid.iter().map(|&p| m.efficiency_percent(p).unwrap()).collect();
            let peak = eff
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!(peak < grid.len() - 1, "{} has no interior peak", m.name);
            for w in eff[peak..].windows(2) {
                assert!(w[1] <= w[0], "{} rises again after its peak", m.name);
            }
        }
    }

    #[test]
    fn b_trails_a_and_c_at_low_power() {
        let (a, b, c) = (
            HarvesterModel::harvester_a(),
            HarvesterModel::harvester_b(),
            HarvesterModel::harvester_c(),
        );
        for i in 0..=200 {
            let p = 10f64.powf(-2.0 + i as f64 / 100.0);
            let eb = b.efficiency_percent(p).unwrap();
            assert!(eb < a.efficiency_percent(p).unwrap(), "p = {p}");
            assert!(eb < c.efficiency_percent(p).unwrap(), "p = {p}");
        }
    }

    #[test]
    fn extrapolation_flag() {
        let c = HarvesterModel::harvester_c();
        assert!(c.is_extrapolated(5e-5));
        assert!(!c.is_extrapolated(1.0));
        assert!(c.is_extrapolated(3.5));
    }

    #[test]
    fn model_file_round_trip() {
        let m = HarvesterModel::new(
            "fitted",
            [0.1 + 0.2, 181.2, -4.43e-2],
            [-6.74e-2, 3.185, 1.0 / 3.0],
            0.03,
            10.0,
        )
        .unwrap();
        let back = HarvesterModel::from_toml(&m.to_toml()).unwrap();
        assert_eq!(back, m);
        let err = HarvesterModel::from_toml("name = \"x\"\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn samples_csv() {
        let text = "input_power_mw,efficiency_percent\n0.1,20\n1,55.5\n";
        let s = read_samples_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1], EfficiencySample::new(1.0, 55.5).unwrap());

        let bad = "input_power_mw,efficiency_percent\n0.1,20\n1,abc\n";
        match read_samples_csv(bad.as_bytes(), "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let no_header = "0.1,20\n1,50\n";
        assert!(matches!(
            read_samples_csv(no_header.as_bytes(), "mem"),
            Err(Error::Parse { line: 1, .. })
        ));
        let out_of_range = "input_power_mw,efficiency_percent\n-1,20\n";
        assert!(matches!(
            read_samples_csv(out_of_range.as_bytes(), "mem"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn clamp_holds_everywhere(exp in -8.0f64..5.0, which in 0usize..3) {
            let m = &HarvesterModel::builtins()[which];
            let p = 10f64.powf(exp);
            let e = m.efficiency_percent(p).unwrap();
            prop_assert!((0.0..=100.0).contains(&e));
            let h = m.harvested_mw(p).unwrap();
            prop_assert!(h >= 0.0 && h <= p);
        }
    }
}
