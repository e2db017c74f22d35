//! Identified sets and breakdown frontiers for the local average treatment
//! effect when the instrument may be c-dependent on potential outcomes and a
//! share of the population may defy the instrument.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: observed distributions, sensitivity points, intervals, micro-data.
//! * [`bounds`]: closed-form envelopes and ITT / complier-share / LATE / ATE sets.
//! * [`frontier`]: breakdown frontiers over a grid of `c`.
//! * [`estimate`]: sample analogues and the selection-on-observables calibration of `c`.
//! * [`inference`]: bootstrap lower confidence bands for frontiers.
//! * [`oracle`]: sharp sets by linear programming over latent response types.
//! * [`simulate`]: the reference DGP and a Monte Carlo harness.

#![allow(clippy::needless_range_loop)] // index loops mirror the cell tables

pub mod bounds;
pub mod error;
pub mod estimate;
pub mod frontier;
pub mod inference;
pub mod model;
pub mod oracle;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{
    validate, Dataset, FrontierQuery, Interval, ObservedCell, ObservedDistribution, Record,
    SensitivityPoint, Target,
};
