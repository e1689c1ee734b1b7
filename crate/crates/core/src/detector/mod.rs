//! Detector backends.
//!
//! Every backend answers `detect(image_id, region)` with boxes in
//! region-local coordinates. Two implementations exist: [`ReplayDetector`]
//! serves detections from a fixture file with seeded noise, and
//! [`ExternalDetector`] talks to a separate process over newline-delimited
//! JSON.

mod external;
mod replay;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{InspectError, Result};
use crate::geometry::Detection;
use crate::slicing::SliceRect;

pub use external::{ExternalDetector, PROTOCOL_VERSION};
pub use replay::{FixtureDetection, NoiseSpec, ReplayDetector, ReplayFixture, ReplayHeader};

/// Part of an image handed to a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// The whole image.
    Full {
        w: u32,
        h: u32,
    },
    Slice(SliceRect),
}

impl Region {
    /// `[x, y, w, h]` of the region in the image frame.
    pub fn rect(&self) -> [u32; 4] {
        match *self {
            Region::Full { w, h } => [0, 0, w, h],
            Region::Slice(s) => [s.x, s.y, s.w, s.h],
        }
    }

    /// Stable textual key, used to derive per-region noise streams.
    pub fn key(&self) -> String {
        match self {
            Region::Full { .. } => "full".to_string(),
            Region::Slice(s) => format!("r{}c{}@{},{},{},{}", s.row, s.col, s.x, s.y, s.w, s.h),
        }
    }
}

/// What a backend reports about itself during the handshake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub model_id: String,
    pub input_w: u32,
    pub input_h: u32,
    pub protocol_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Replay,
    External,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Replay => f.write_str("replay"),
            BackendKind::External => f.write_str("external"),
        }
    }
}

/// A detection model the pipeline can call.
pub trait Detector: Send + Sync {
    fn model_id(&self) -> &str;

    fn kind(&self) -> BackendKind;

    fn handshake(&self) -> Result<Capabilities>;

    /// Detections for `region` of `image_id`, in region-local coordinates.
    fn detect(&self, image_id: &str, region: &Region) -> Result<Vec<Detection>>;
}

/// The set of detector backends wired into a pipeline, keyed by model id.
#[derive(Clone, Default)]
pub struct DetectorRegistry {
    backends: BTreeMap<String, Arc<dyn Detector>>,
}

impl DetectorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, detector: Arc<dyn Detector>) -> Result<()> {
        let id = detector.model_id().to_string();
        if self.backends.contains_key(&id) {
            return Err(InspectError::usage(format!("model {id} registered twice")));
        }
        self.backends.insert(id, detector);
        Ok(())
    }

    pub fn get(&self, model_id: &str) -> Result<&Arc<dyn Detector>> {
        self.backends
            .get(model_id)
            .ok_or_else(|| InspectError::lookup(format!("no detector registered as {model_id}")))
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.backends.contains_key(model_id)
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}

impl fmt::Debug for DetectorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.backends.iter().map(|(k, v)| (k, v.kind())))
            .finish()
    }
}
