//! Wireless power transfer to zero-energy devices on the Martian surface.
//!
//! The link model chains log-distance path loss with log-normal shadowing,
//! dust-storm attenuation, misalignment fading and a nonlinear rectifier
//! efficiency curve. [`link::estimate_harvest`] turns one scenario into
//! harvested-power statistics and [`sweep::run_sweep`] repeats that over a
//! parameter axis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harvester;
pub mod link;
pub mod pointing;
pub mod propagation;
pub mod quantities;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
pub use harvester::{EfficiencySample, HarvesterModel};
pub use link::{estimate_harvest, HarvestStats, LinkScenario, MonteCarloSettings};
pub use pointing::{MisalignmentModel, PointingGeometry};
pub use propagation::{DustStorm, TerrainProfile};
pub use quantities::{PowerDbm, PowerMw, RfCarrier};
pub use sweep::{builtin_presets, run_sweep, SweepRow, SweepSpec};
