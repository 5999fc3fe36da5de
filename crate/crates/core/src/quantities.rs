//! Power units, gains and the RF carrier.
//!
//! Link arithmetic stays in dB/dBm. Linear milliwatts only appear at the
//! harvester boundary, where the efficiency model is defined.

use std::ops::{Add, Sub};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s), exact.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier used throughout the Martian surface scenarios.
pub const DEFAULT_FREQUENCY_HZ: f64 = 2.45e9;

/// Power level in dBm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PowerDbm(pub f64);

/// Linear power in milliwatts. Never negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PowerMw(f64);

/// Antenna gain in dB.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GainDb(pub f64);

/// Loss in dB; positive values reduce received power.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct LossDb(pub f64);

impl PowerMw {
    pub fn new(mw: f64) -> Result<Self> {
        if mw >= 0.0 {
            Ok(PowerMw(mw))
        } else {
            Err(Error::domain(format!("power must be >= 0 mW, got {mw}")))
        }
    }

    pub fn from_watts(w: f64) -> Result<Self> {
        Self::new(w * 1e3)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_uw(self) -> f64 {
        self.0 * 1e3
    }
}

impl PowerDbm {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn from_watts(w: f64) -> Result<Self> {
        mw_to_dbm(PowerMw::from_watts(w)?)
    }
}

impl Add<GainDb> for PowerDbm {
    type Output = PowerDbm;
    fn add(self, g: GainDb) -> PowerDbm {
        PowerDbm(self.0 + g.0)
    }
}

impl Sub<LossDb> for PowerDbm {
    type Output = PowerDbm;
    fn sub(self, l: LossDb) -> PowerDbm {
        PowerDbm(self.0 - l.0)
    }
}

impl Add for LossDb {
    type Output = LossDb;
    fn add(self, o: LossDb) -> LossDb {
        LossDb(self.0 + o.0)
    }
}

pub fn dbm_to_mw(p: PowerDbm) -> PowerMw {
    PowerMw(10f64.powf(p.0 / 10.0))
}

pub fn mw_to_dbm(p: PowerMw) -> Result<PowerDbm> {
    if p.0 > 0.0 {
        Ok(PowerDbm(10.0 * p.0.log10()))
    } else {
        Err(Error::domain(format!(
            "cannot express {} mW in dBm, power must be > 0",
            p.0
        )))
    }
}

pub fn wavelength_of(frequency_hz: f64) -> Result<f64> {
    if frequency_hz > 0.0 && frequency_hz.is_finite() {
        Ok(SPEED_OF_LIGHT / frequency_hz)
    } else {
        Err(Error::domain(format!(
            "frequency must be > 0 Hz, got {frequency_hz}"
        )))
    }
}

/// A monochromatic RF carrier; the wavelength is derived once at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfCarrier {
    frequency: f64,
    wavelength: f64,
}

impl RfCarrier {
    pub fn new(frequency_hz: f64) -> Result<Self> {
        Ok(RfCarrier {
            frequency: frequency_hz,
            wavelength: wavelength_of(frequency_hz)?,
        })
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength
    }
}

impl Default for RfCarrier {
    fn default() -> Self {
        RfCarrier {
            frequency: DEFAULT_FREQUENCY_HZ,
            wavelength: SPEED_OF_LIGHT / DEFAULT_FREQUENCY_HZ,
        }
    }
}
