//! Shared test support: brute-force oracles, random instance generators and
//! property checks used by both the integration tests and the acceptance
//! runner.
#![allow(dead_code)]

pub mod oracle;
pub mod props;

use std::sync::Arc;

use inspect_core::detector::{DetectorRegistry, ReplayDetector, ReplayFixture};
use inspect_core::ensemble::{Pipeline, PipelineConfig};
use inspect_core::{BoundingBox, Detection};

pub fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

pub fn det(b: BoundingBox, conf: f64) -> Detection {
    Detection::new(b, conf, "F1", "img").unwrap()
}

/// Replay registry serving every listed model from one fixture.
pub fn replay_registry(fixture: ReplayFixture, models: &[&str]) -> DetectorRegistry {
    let fixture = Arc::new(fixture);
    let mut reg = DetectorRegistry::new();
    for m in models {
        reg.register(Arc::new(ReplayDetector::new(*m, fixture.clone())))
            .unwrap();
    }
    reg
}

pub fn replay_pipeline(fixture: ReplayFixture, models: &[&str]) -> Pipeline {
    Pipeline::new(PipelineConfig::default(), replay_registry(fixture, models)).unwrap()
}
