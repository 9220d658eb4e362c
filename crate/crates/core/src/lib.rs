//! Reconstruction of social proximity networks from Bluetooth discovery-scan
//! logs.
//!
//! The pipeline runs scan logs through [`ingest`] (parse, pseudonymize,
//! roster join), [`proximity`] (scan tallies and pair weights),
//! [`backbone`] (disparity filter), [`analyze`] (scan rates, edge coverage,
//! survey severity, attribute assortativity) and [`layout`]
//! (force-directed coordinates). [`sim`] generates synthetic cohorts with
//! known ground truth for validating all of the above.

pub mod analyze;
pub mod backbone;
pub mod error;
pub mod graphml;
pub mod ingest;
pub mod layout;
pub mod model;
pub mod pipeline;
pub mod proximity;
pub mod sim;

pub use error::{Error, Result};
