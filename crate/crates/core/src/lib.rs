//! Inspection engine for die-cast aluminum parts: sliced two-model surface
//! detection, single-model thread detection, defect merging, pixel to
//! millimeter measurement, severity classification and reporting.

pub mod detector;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod measurement;
pub mod merging;
pub mod optics;
pub mod orchestrator;
pub mod scan;
pub mod slicing;
pub mod synth;

pub use error::{InspectError, Result};
pub use geometry::{BoundingBox, Detection};
