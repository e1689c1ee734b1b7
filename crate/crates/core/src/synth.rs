//! Constructed fixtures with known structure, used by demos and tests.
//!
//! Nothing here comes from real parts or trained models. Boxes are laid out
//! on a coarse lattice so that unrelated boxes never overlap and never fall
//! within merging distance of each other.

use crate::detector::{NoiseSpec, ReplayFixture};
use crate::evaluation::{GroundTruthDefect, GroundTruthSet};
use crate::geometry::BoundingBox;
use crate::measurement::{calibrate, InspectionKind};
use crate::orchestrator::{image_id, PartDescription};
use crate::scan::{build_plan, ScanTiming, View, ViewSpec};

/// Image used by [`ensemble_scenario`].
pub const ENSEMBLE_IMAGE: &str = "ens.0";
/// Single-model baseline present in the ensemble fixture.
pub const BASELINE_MODEL: &str = "S1";

const CELL_PITCH: f64 = 160.0;
const CELL_SIDE: f64 = 40.0;

fn cell(n: usize) -> BoundingBox {
    let (i, j) = (n % 15, n / 15);
    BoundingBox::new(
        60.0 + CELL_PITCH * i as f64,
        60.0 + CELL_PITCH * j as f64,
        CELL_SIDE,
        CELL_SIDE,
    )
    .expect("lattice cell is valid")
}

fn shifted(b: BoundingBox, dx: f64) -> BoundingBox {
    b.translate(dx, 0.0).expect("shift stays in the image")
}

/// Two-model fixture with known false positives.
#[derive(Debug, Clone)]
pub struct EnsembleScenario {
    pub fixture: ReplayFixture,
    pub ground_truth: GroundTruthSet,
    pub true_defects: usize,
    /// Confident false positives emitted by each surface model.
    pub fp_a: usize,
    pub fp_b: usize,
    /// False positives both models report at the same place.
    pub fp_shared: usize,
    pub fp_baseline: usize,
}

/// Both surface models report every true defect. `F1` adds 8 confident
/// false positives, `F2` adds 19, and exactly two of those sit on top of
/// each other across models. A third pair overlaps too but stays under the
/// confidence threshold. The baseline model `S1` reports every true defect
/// plus 16 false positives.
pub fn ensemble_scenario() -> EnsembleScenario {
    const TRUE: usize = 10;
    const SHARED: usize = 2;
    const ONLY_A: usize = 6;
    const ONLY_B: usize = 17;
    const LOW: usize = 3;
    const BASELINE_FP: usize = 16;

    let mut f = ReplayFixture::default();
    let mut gt = Vec::new();
    let mut next = 0..;
    let mut take = |n: usize| -> Vec<BoundingBox> { (&mut next).take(n).map(cell).collect() };
    let conf = |k: usize| 0.75 + 0.01 * (k % 20) as f64;

    for b in take(TRUE) {
        f.push(ENSEMBLE_IMAGE, "F1", b, 0.92);
        f.push(ENSEMBLE_IMAGE, "F2", shifted(b, 2.0), 0.88);
        f.push(ENSEMBLE_IMAGE, BASELINE_MODEL, b, 0.9);
        gt.push(GroundTruthDefect { bbox: b, size_mm: None });
    }
    for b in take(SHARED) {
        f.push(ENSEMBLE_IMAGE, "F1", b, 0.8);
        f.push(ENSEMBLE_IMAGE, "F2", shifted(b, 10.0), 0.75);
    }
    for (k, b) in take(ONLY_A).into_iter().enumerate() {
        f.push(ENSEMBLE_IMAGE, "F1", b, conf(k));
    }
    for (k, b) in take(ONLY_B).into_iter().enumerate() {
        f.push(ENSEMBLE_IMAGE, "F2", b, conf(k));
    }
    for b in take(LOW) {
        f.push(ENSEMBLE_IMAGE, "F1", b, 0.6);
        f.push(ENSEMBLE_IMAGE, "F2", shifted(b, 5.0), 0.5);
    }
    for (k, b) in take(BASELINE_FP).into_iter().enumerate() {
        f.push(ENSEMBLE_IMAGE, BASELINE_MODEL, b, conf(k));
    }

    let mut ground_truth = GroundTruthSet::default();
    ground_truth.images.insert(ENSEMBLE_IMAGE.to_string(), gt);
    EnsembleScenario {
        fixture: f,
        ground_truth,
        true_defects: TRUE,
        fp_a: SHARED + ONLY_A,
        fp_b: SHARED + ONLY_B,
        fp_shared: SHARED,
        fp_baseline: BASELINE_FP,
    }
}

/// Eight parts with replayed detections for an end-to-end run.
#[derive(Debug, Clone)]
pub struct PartsScenario {
    pub parts: Vec<PartDescription>,
    pub fixture: ReplayFixture,
    pub ground_truth: GroundTruthSet,
}

/// The part whose only finding is a false positive of about 1.6 mm.
pub const REVIEWED_PART: &str = "P08";
/// Image holding that false positive.
pub const REVIEWED_IMAGE: &str = "P08.front.S1";
/// Side of the square false-positive box: about 1.605 mm at 0.0625 mm/px.
pub const REVIEWED_BOX_SIDE_PX: f64 = 21.6;

pub const PART_TYPE: &str = "gearbox-housing";

fn scenario_views() -> Vec<ViewSpec> {
    vec![
        ViewSpec {
            view: View::Rear,
            surface_images: 2,
            thread_count: 1,
        },
        ViewSpec {
            view: View::Front,
            surface_images: 1,
            thread_count: 1,
        },
    ]
}

pub fn part_description(part_id: &str) -> PartDescription {
    PartDescription {
        part_id: part_id.to_string(),
        part_type: PART_TYPE.to_string(),
        views: scenario_views(),
        timing: ScanTiming::default(),
        calibrations: vec![
            // 10 mm marker imaged at 160 px on surfaces, 958 px on threads
            calibrate(10.0, 160.0, InspectionKind::Surface, PART_TYPE).expect("valid calibration"),
            calibrate(10.0, 958.0, InspectionKind::Thread, PART_TYPE).expect("valid calibration"),
        ],
    }
}

/// Parts `P01`..`P07` each carry a considerable surface defect, so they are
/// rejected whatever else is found. Even parts among them also show a
/// considerable thread defect in two of its five captures, odd ones a small
/// inconsiderable surface defect, and `P07` a borderline one. `P08` has
/// only one borderline false positive, leaving it pending review.
pub fn eight_part_scenario() -> PartsScenario {
    let mut fixture = ReplayFixture {
        noise: NoiseSpec {
            seed: 2024,
            confidence_jitter_sigma: 0.005,
            false_positive_rate: 0.0,
            drop_rate: 0.0,
        },
        ..Default::default()
    };
    let mut ground_truth = GroundTruthSet::default();
    let mut parts = Vec::new();
    let bb = |x, y, w, h| BoundingBox::new(x, y, w, h).expect("valid box");

    for k in 1..=8usize {
        let part_id = format!("P{k:02}");
        let part = part_description(&part_id);
        let plan = build_plan(&part.views, &part.timing).expect("valid plan");
        for c in &plan.captures {
            let id = image_id(&part_id, c);
            fixture.add_image(&id);
            ground_truth.images.entry(id).or_default();
        }
        let mut real = |fixture: &mut ReplayFixture, image: &str, b: BoundingBox, surface: bool| {
            if surface {
                fixture.push(image, "F1", b, 0.91);
                fixture.push(image, "F2", shifted(b, 3.0), 0.86);
            } else {
                fixture.push(image, "F3", b, 0.8);
            }
            ground_truth
                .images
                .entry(image.to_string())
                .or_default()
                .push(GroundTruthDefect { bbox: b, size_mm: None });
        };

        if k <= 7 {
            let x = 400.0 + 10.0 * k as f64;
            real(
                &mut fixture,
                &format!("{part_id}.rear.S1"),
                bb(x, 300.0, 40.0, 40.0),
                true,
            );
            if k % 2 == 0 {
                let b = bb(1000.0, 900.0, 220.0, 200.0);
                for pattern in ["center", "cross-2"] {
                    real(&mut fixture, &format!("{part_id}.front.T1.{pattern}"), b, false);
                }
            } else {
                real(
                    &mut fixture,
                    &format!("{part_id}.rear.S2"),
                    bb(1500.0, 700.0, 12.0, 12.0),
                    true,
                );
            }
            if k == 7 {
                real(
                    &mut fixture,
                    &format!("{part_id}.front.S1"),
                    bb(600.0, 1500.0, 24.2, 24.2),
                    true,
                );
            }
        } else {
            let side = REVIEWED_BOX_SIDE_PX;
            let b = bb(1800.0, 400.0, side, side);
            fixture.push(REVIEWED_IMAGE, "F1", b, 0.83);
            fixture.push(REVIEWED_IMAGE, "F2", b, 0.79);
        }
        parts.push(part);
    }
    PartsScenario {
        parts,
        fixture,
        ground_truth,
    }
}
