use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendKind, Capabilities, Detector, Region, PROTOCOL_VERSION};
use crate::error::{InspectError, Result};
use crate::geometry::{BoundingBox, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub input_w: u32,
    pub input_h: u32,
}

impl Default for ReplayHeader {
    fn default() -> Self {
        Self {
            input_w: 1280,
            input_h: 1280,
        }
    }
}

/// Noise applied on top of the recorded detections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub seed: u64,
    /// Standard deviation of the Gaussian added to each confidence.
    pub confidence_jitter_sigma: f64,
    /// Expected number of injected boxes per forward pass (slice or full
    /// image). The integer part is always injected, the fraction is a
    /// Bernoulli draw.
    pub false_positive_rate: f64,
    /// Probability of dropping each recorded detection.
    pub drop_rate: f64,
}

/// A recorded detection in the full-image frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureDetection {
    pub bbox: BoundingBox,
    pub conf: f64,
}

/// Recorded detector outputs: image id → model id → detections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplayFixture {
    #[serde(default)]
    pub header: ReplayHeader,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub images: BTreeMap<String, BTreeMap<String, Vec<FixtureDetection>>>,
}

impl ReplayFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let fixture: Self = serde_json::from_str(text)?;
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        if !n.confidence_jitter_sigma.is_finite() || n.confidence_jitter_sigma < 0.0 {
            return Err(InspectError::usage("jitter sigma must be a finite non-negative number"));
        }
        if !n.false_positive_rate.is_finite() || n.false_positive_rate < 0.0 {
            return Err(InspectError::usage("false positive rate must be non-negative"));
        }
        if !(0.0..=1.0).contains(&n.drop_rate) {
            return Err(InspectError::usage("drop rate must lie in [0, 1]"));
        }
        for (image, models) in &self.images {
            for (model, dets) in models {
                if let Some(bad) = dets.iter().find(|d| !(0.0..=1.0).contains(&d.conf)) {
                    return Err(InspectError::usage(format!(
                        "{image}/{model}: confidence {} outside [0, 1]",
                        bad.conf
                    )));
                }
            }
        }
        Ok(())
    }

    /// Convenience builder used by tests and fixture generators.
    pub fn push(&mut self, image_id: &str, model_id: &str, bbox: BoundingBox, conf: f64) {
        self.images
            .entry(image_id.to_string())
            .or_default()
            .entry(model_id.to_string())
            .or_default()
            .push(FixtureDetection { bbox, conf });
    }

    /// Register an image with no recorded detections.
    pub fn add_image(&mut self, image_id: &str) {
        self.images.entry(image_id.to_string()).or_default();
    }
}

/// Deterministic detector serving one model's recorded outputs.
///
/// A region request returns the recorded boxes lying entirely inside the
/// region, translated into region-local coordinates. Noise is drawn from a
/// stream keyed by `(seed, image, region, model)`, so results do not depend
/// on call order.
#[derive(Debug, Clone)]
pub struct ReplayDetector {
    model_id: String,
    fixture: Arc<ReplayFixture>,
}

impl ReplayDetector {
    pub fn new(model_id: impl Into<String>, fixture: Arc<ReplayFixture>) -> Self {
        Self {
            model_id: model_id.into(),
            fixture,
        }
    }

    fn noise_rng(&self, image_id: &str, region: &Region) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.fixture.noise.seed.to_le_bytes());
        for part in [image_id, &region.key(), &self.model_id] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

impl Detector for ReplayDetector {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn handshake(&self) -> Result<Capabilities> {
        Ok(Capabilities {
            model_id: self.model_id.clone(),
            input_w: self.fixture.header.input_w,
            input_h: self.fixture.header.input_h,
            protocol_version: PROTOCOL_VERSION,
        })
    }

    fn detect(&self, image_id: &str, region: &Region) -> Result<Vec<Detection>> {
        let models = self
            .fixture
            .images
            .get(image_id)
            .ok_or_else(|| InspectError::lookup(format!("image {image_id} not in replay fixture")))?;
        let recorded = models.get(&self.model_id).map(Vec::as_slice).unwrap_or(&[]);

        let [rx, ry, rw, rh] = region.rect().map(f64::from);
        let area = BoundingBox::new(rx, ry, rw, rh)?;
        let noise = &self.fixture.noise;
        let mut rng = self.noise_rng(image_id, region);
        let mut out = Vec::new();

        for rec in recorded.iter().filter(|r| area.contains(&r.bbox)) {
            let u: f64 = rng.random();
            let z: f64 = rng.sample(StandardNormal);
            if u < noise.drop_rate {
                continue;
            }
            let conf = (rec.conf + noise.confidence_jitter_sigma * z).clamp(0.0, 1.0);
            let local = BoundingBox::new(rec.bbox.x() - rx, rec.bbox.y() - ry, rec.bbox.w(), rec.bbox.h())?;
            out.push(Detection::new(local, conf, &self.model_id, image_id)?);
        }

        let whole = noise.false_positive_rate.floor();
        let mut injected = whole as usize;
        if rng.random::<f64>() < noise.false_positive_rate - whole {
            injected += 1;
        }
        for _ in 0..injected {
            let w = (8.0 + 56.0 * rng.random::<f64>()).min(rw);
            let h = (8.0 + 56.0 * rng.random::<f64>()).min(rh);
            let x = (rw - w) * rng.random::<f64>();
            let y = (rh - h) * rng.random::<f64>();
            let conf = 0.5 + 0.5 * rng.random::<f64>();
            out.push(Detection::new(
                BoundingBox::new(x, y, w, h)?,
                conf,
                &self.model_id,
                image_id,
            )?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicing::SliceRect;

    const FULL: Region = Region::Full { w: 2448, h: 2048 };

    fn fixture(noise: NoiseSpec) -> Arc<ReplayFixture> {
        let mut f = ReplayFixture {
            noise,
            ..Default::default()
        };
        f.push("img_7", "F1", BoundingBox::new(100.0, 100.0, 40.0, 30.0).unwrap(), 0.92);
        Arc::new(f)
    }

    #[test]
    fn replays_recorded_detection() {
        let d = ReplayDetector::new("F1", fixture(NoiseSpec::default()));
        let out = d.detect("img_7", &FULL).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BoundingBox::new(100.0, 100.0, 40.0, 30.0).unwrap());
        assert_eq!(out[0].confidence(), 0.92);
        assert_eq!(out[0].model_id, "F1");
    }

    #[test]
    fn total_dropout() {
        let d = ReplayDetector::new(
            "F1",
            fixture(NoiseSpec {
                drop_rate: 1.0,
                ..Default::default()
            }),
        );
        assert!(d.detect("img_7", &FULL).unwrap().is_empty());
    }

    #[test]
    fn injected_false_positives_are_reproducible() {
        let noise = NoiseSpec {
            seed: 42,
            false_positive_rate: 2.0,
            ..Default::default()
        };
        let d = ReplayDetector::new("F1", fixture(noise.clone()));
        let first = d.detect("img_7", &FULL).unwrap();
        assert_eq!(first.len(), 3);
        let again = ReplayDetector::new("F1", fixture(noise))
            .detect("img_7", &FULL)
            .unwrap();
        assert_eq!(serde_json::to_vec(&first).unwrap(), serde_json::to_vec(&again).unwrap());
        for det in &first[1..] {
            assert!(det.bbox.right() <= 2448.0 && det.bbox.bottom() <= 2048.0);
        }
    }

    #[test]
    fn noise_streams_independent_of_call_order() {
        let noise = NoiseSpec {
            seed: 7,
            confidence_jitter_sigma: 0.2,
            false_positive_rate: 1.5,
            drop_rate: 0.3,
        };
        let d = ReplayDetector::new("F1", fixture(noise));
        let slice = Region::Slice(SliceRect {
            row: 0,
            col: 0,
            x: 0,
            y: 0,
            w: 1280,
            h: 1071,
        });
        let a1 = d.detect("img_7", &FULL).unwrap();
        let b1 = d.detect("img_7", &slice).unwrap();
        let b2 = d.detect("img_7", &slice).unwrap();
        let a2 = d.detect("img_7", &FULL).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        for det in a1.iter().chain(&b1) {
            assert!((0.0..=1.0).contains(&det.confidence()));
        }
    }

    #[test]
    fn slice_requests_return_contained_boxes_in_local_frame() {
        let mut f = ReplayFixture::default();
        f.push("img", "F1", BoundingBox::new(1200.0, 10.0, 20.0, 20.0).unwrap(), 0.9);
        f.push("img", "F1", BoundingBox::new(1100.0, 10.0, 20.0, 20.0).unwrap(), 0.9);
        let d = ReplayDetector::new("F1", Arc::new(f));
        let right = Region::Slice(SliceRect {
            row: 0,
            col: 1,
            x: 1168,
            y: 0,
            w: 1280,
            h: 1071,
        });
        let out = d.detect("img", &right).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BoundingBox::new(32.0, 10.0, 20.0, 20.0).unwrap());
    }

    #[test]
    fn unknown_image_is_lookup_error() {
        let d = ReplayDetector::new("F1", fixture(NoiseSpec::default()));
        assert!(matches!(d.detect("nope", &FULL), Err(InspectError::Lookup(_))));
    }

    #[test]
    fn handshake_copies_header() {
        let text = r#"{"header":{"input_w":640,"input_h":512},"images":{}}"#;
        let f = Arc::new(ReplayFixture::from_json(text).unwrap());
        let caps = ReplayDetector::new("F2", f).handshake().unwrap();
        assert_eq!((caps.model_id.as_str(), caps.input_w, caps.input_h), ("F2", 640, 512));
    }

    #[test]
    fn rejects_invalid_fixtures() {
        let bad_conf = r#"{"images":{"a":{"F1":[{"bbox":[0,0,1,1],"conf":1.5}]}}}"#;
        assert!(ReplayFixture::from_json(bad_conf).is_err());
        let bad_box = r#"{"images":{"a":{"F1":[{"bbox":[0,0,0,1],"conf":0.5}]}}}"#;
        assert!(ReplayFixture::from_json(bad_box).is_err());
        let bad_noise = r#"{"noise":{"drop_rate":2.0},"images":{}}"#;
        assert!(ReplayFixture::from_json(bad_noise).is_err());
    }
}
