//! Randomized property checks. Each runs its own proptest runner for the
//! requested number of cases and reports the first counterexample.

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use inspect_core::geometry::{union_box, BoundingBox, Detection};
use inspect_core::measurement::{classify_severity, defect_size_px, InspectionKind, Severity, SeverityPolicy};
use inspect_core::merging::merge_close;
use inspect_core::orchestrator::{apply_verdict, InspectionReport, MeasuredDefect, PartStatus, ReviewVerdict, Verdict};
use inspect_core::scan::View;
use inspect_core::slicing::{compute_grid, compute_grid_fixed_tile, SliceGrid};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn arb_box(extent: f64, max_side: f64) -> impl Strategy<Value = BoundingBox> {
    (0.0..extent, 0.0..extent, 0.5..max_side, 0.5..max_side)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

fn arb_dets(max: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((arb_box(150.0, 30.0), 0.0..=1.0f64), 0..max).prop_map(|v| {
        v.into_iter()
            .map(|(b, c)| Detection::new(b, c, "F1", "img").unwrap())
            .collect()
    })
}

/// Longer side ≤ estimated size ≤ diagonal.
pub fn size_between_side_and_diagonal(cases: u32) -> Result<(), String> {
    run(cases, (0.01..5000.0f64, 0.01..5000.0f64), |(w, h)| {
        let b = BoundingBox::new(0.0, 0.0, w, h).unwrap();
        let s = defect_size_px(&b);
        let tol = 1e-12 * s;
        prop_assert!(w.max(h) <= s + tol, "size {} below side {}", s, w.max(h));
        prop_assert!(s <= w.hypot(h) + tol, "size {} above diagonal {}", s, w.hypot(h));
        Ok(())
    })
}

fn axis_covered(origins: &[u32], tile: u32, dim: u32) -> bool {
    let mut reach = 0;
    for &o in origins {
        if o > reach {
            return false;
        }
        reach = reach.max(o + tile);
    }
    reach == dim
}

fn grid_ok(g: &SliceGrid) -> Result<(), TestCaseError> {
    prop_assert_eq!(g.slices.len() as u32, g.rows * g.cols);
    prop_assert!(axis_covered(&g.x_origins(), g.tile_w, g.image_w));
    prop_assert!(axis_covered(&g.y_origins(), g.tile_h, g.image_h));
    for s in &g.slices {
        prop_assert!(s.x + s.w <= g.image_w && s.y + s.h <= g.image_h);
        prop_assert_eq!((s.w, s.h), (g.tile_w, g.tile_h));
    }
    Ok(())
}

/// Every pixel lies in some slice and no slice leaves the image, for both
/// grid constructions.
pub fn slicing_covers_image(cases: u32) -> Result<(), String> {
    let strategy = (64u32..4096, 64u32..4096, 1u32..6, 1u32..6, 0.0..0.6f64, 0.3..1.0f64);
    run(cases, strategy, |(w, h, rows, cols, overlap, tile_frac)| {
        if let Ok(g) = compute_grid(w, h, rows, cols, overlap) {
            grid_ok(&g)?;
        }
        let tile_w = ((w as f64 * tile_frac) as u32).max(w.div_ceil(cols)).min(w);
        let tile_h = ((h as f64 * tile_frac) as u32).max(h.div_ceil(rows)).min(h);
        if let Ok(g) = compute_grid_fixed_tile(w, h, rows, cols, tile_w, tile_h) {
            grid_ok(&g)?;
        }
        Ok(())
    })
}

fn merge_key(dets: &[Detection]) -> Vec<(BoundingBox, u64)> {
    dets.iter().map(|d| (d.bbox, d.confidence().to_bits())).collect()
}

/// Merging does not depend on input order.
pub fn merge_permutation_invariant(cases: u32) -> Result<(), String> {
    let strategy = arb_dets(12).prop_flat_map(|d| {
        let n = d.len();
        (Just(d), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), 0.0..60.0f64)
    });
    run(cases, strategy, |(dets, perm, t)| {
        let shuffled: Vec<Detection> = perm.iter().map(|&i| dets[i].clone()).collect();
        prop_assert_eq!(merge_key(&merge_close(&dets, t)), merge_key(&merge_close(&shuffled, t)));
        Ok(())
    })
}

/// Merge output equals the connected components of the "centers within
/// distance" graph, computed here by flood fill.
#[allow(clippy::needless_range_loop)]
pub fn merge_matches_components(cases: u32) -> Result<(), String> {
    run(cases, (arb_dets(12), 0.0..60.0f64), |(dets, t)| {
        let n = dets.len();
        let close = |i: usize, j: usize| {
            let (a, b) = (dets[i].bbox.center(), dets[j].bbox.center());
            (a.0 - b.0).hypot(a.1 - b.1) <= t
        };
        let mut label = vec![usize::MAX; n];
        let mut expected = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = start;
            let mut members = Vec::new();
            while let Some(i) = stack.pop() {
                members.push(i);
                for j in 0..n {
                    if label[j] == usize::MAX && close(i, j) {
                        label[j] = start;
                        stack.push(j);
                    }
                }
            }
            let boxes: Vec<BoundingBox> = members.iter().map(|&i| dets[i].bbox).collect();
            let conf = members.iter().map(|&i| dets[i].confidence()).fold(0.0, f64::max);
            let span = if boxes.len() == 1 {
                boxes[0]
            } else {
                union_box(&boxes).unwrap()
            };
            expected.push((span, conf.to_bits()));
        }
        let mut got = merge_key(&merge_close(&dets, t));
        let sort = |v: &mut Vec<(BoundingBox, u64)>| {
            v.sort_by(|a, b| {
                (a.0.x(), a.0.y(), a.0.w(), a.0.h(), a.1)
                    .partial_cmp(&(b.0.x(), b.0.y(), b.0.w(), b.0.h(), b.1))
                    .unwrap()
            })
        };
        sort(&mut got);
        sort(&mut expected);
        prop_assert_eq!(got, expected);
        Ok(())
    })
}

/// A chain whose neighbors are within the distance collapses to one box
/// spanning all links, even when its ends are far apart.
pub fn merge_single_linkage_chain(cases: u32) -> Result<(), String> {
    let strategy = (
        5.0..120.0f64,
        prop::collection::vec((0.3..0.9f64, -0.3..0.3f64), 1..8),
        prop::collection::vec((1.0..10.0f64, 1.0..10.0f64), 8),
    );
    run(cases, strategy, |(t, steps, sizes)| {
        let (mut cx, mut cy) = (500.0, 500.0);
        let mut dets = Vec::new();
        for (k, (w, h)) in sizes.iter().take(steps.len() + 1).enumerate() {
            if k > 0 {
                cx += steps[k - 1].0 * t;
                cy += steps[k - 1].1 * t;
            }
            let b = BoundingBox::new(cx - w / 2.0, cy - h / 2.0, *w, *h).unwrap();
            dets.push(Detection::new(b, 0.5 + 0.01 * k as f64, "F1", "img").unwrap());
        }
        let merged = merge_close(&dets, t);
        prop_assert_eq!(merged.len(), 1);
        let boxes: Vec<BoundingBox> = dets.iter().map(|d| d.bbox).collect();
        prop_assert_eq!(merged[0].bbox, union_box(&boxes).unwrap());
        prop_assert_eq!(merged[0].confidence(), dets.last().unwrap().confidence());
        Ok(())
    })
}

/// Larger defects never receive a milder grade, for any valid policy.
pub fn severity_monotone(cases: u32) -> Result<(), String> {
    let strategy = (0.1..5.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..8.0f64, 0.0..8.0f64);
    run(cases, strategy, |(limit, lo_frac, hi_extra, a, b)| {
        let policy = SeverityPolicy::new(limit, limit * lo_frac, limit + hi_extra).unwrap();
        let (small, large) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(classify_severity(small, &policy) <= classify_severity(large, &policy));
        Ok(())
    })
}

fn status_oracle(defects: &[(Severity, Option<Verdict>)]) -> PartStatus {
    let considerable = defects.iter().any(|(s, _)| *s == Severity::Considerable);
    let human_reject = defects
        .iter()
        .any(|(s, v)| *s == Severity::Borderline && *v == Some(Verdict::Reject));
    let unreviewed = defects.iter().any(|(s, v)| *s == Severity::Borderline && v.is_none());
    if considerable || human_reject {
        PartStatus::Rejected
    } else if unreviewed {
        PartStatus::PendingReview
    } else {
        PartStatus::Accepted
    }
}

pub fn report_with(severities: &[Severity]) -> InspectionReport {
    let defects = severities
        .iter()
        .enumerate()
        .map(|(i, &severity)| MeasuredDefect {
            defect_id: format!("P-D{:03}", i + 1),
            view: View::Rear,
            kind: InspectionKind::Surface,
            image_id: "P.rear.S1".into(),
            thread_id: None,
            bbox: BoundingBox::new(10.0 * i as f64, 0.0, 5.0, 5.0).unwrap(),
            confidence: 0.9,
            size_px: 5.0,
            size_mm: 1.0,
            severity,
            verdict: None,
        })
        .collect();
    let mut r = InspectionReport {
        part_id: "P".into(),
        part_type: "t".into(),
        calibrations: vec![],
        defects,
        part_status: PartStatus::Accepted,
        created_at: Utc.timestamp_opt(0, 0).unwrap(),
        config_digest: String::new(),
        failures: vec![],
        verdicts: vec![],
    };
    r.recompute();
    r
}

/// Part status is a pure function of defects and verdict history: applying
/// verdicts one by one, recomputing from the shuffled history, and the
/// definition evaluated directly all agree.
pub fn status_is_pure(cases: u32) -> Result<(), String> {
    let severity = prop_oneof![
        Just(Severity::Inconsiderable),
        Just(Severity::Borderline),
        Just(Severity::Considerable)
    ];
    let strategy = (
        prop::collection::vec(severity, 0..8),
        prop::collection::vec((0usize..8, any::<bool>(), 0i64..4, 0usize..2), 0..10),
    )
        .prop_flat_map(|(sev, events)| {
            let n = events.len();
            (Just(sev), Just(events), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        });
    run(cases, strategy, |(severities, events, perm)| {
        let base = report_with(&severities);
        let verdicts: Vec<ReviewVerdict> = events
            .iter()
            .filter(|(i, ..)| severities.get(*i) == Some(&Severity::Borderline))
            .map(|&(i, accept, t, who)| ReviewVerdict {
                defect_id: format!("P-D{:03}", i + 1),
                verdict: if accept { Verdict::Accept } else { Verdict::Reject },
                reviewer: ["alice", "bob"][who].into(),
                timestamp: Utc.timestamp_opt(t, 0).unwrap(),
            })
            .collect();

        let mut incremental = base.clone();
        for v in &verdicts {
            incremental = apply_verdict(&incremental, v.clone()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        }

        let mut scratch = base.clone();
        scratch.verdicts = perm.iter().filter_map(|&i| verdicts.get(i).cloned()).collect();
        scratch.recompute();

        let mut latest: BTreeMap<&str, &ReviewVerdict> = BTreeMap::new();
        for v in &verdicts {
            let newer = latest.get(v.defect_id.as_str()).is_none_or(|cur| {
                (v.timestamp, &v.reviewer, v.verdict.as_str()) > (cur.timestamp, &cur.reviewer, cur.verdict.as_str())
            });
            if newer {
                latest.insert(&v.defect_id, v);
            }
        }
        let pairs: Vec<(Severity, Option<Verdict>)> = base
            .defects
            .iter()
            .map(|d| (d.severity, latest.get(d.defect_id.as_str()).map(|v| v.verdict)))
            .collect();

        prop_assert_eq!(incremental.part_status, status_oracle(&pairs));
        prop_assert_eq!(scratch.part_status, incremental.part_status);
        prop_assert_eq!(&scratch.defects, &incremental.defects);
        Ok(())
    })
}

pub type Property = fn(u32) -> Result<(), String>;

pub const ALL: [(&str, Property); 7] = [
    ("size between longer side and diagonal", size_between_side_and_diagonal),
    ("slices cover the image", slicing_covers_image),
    ("merge ignores input order", merge_permutation_invariant),
    ("merge equals distance-graph components", merge_matches_components),
    ("single-linkage chains collapse", merge_single_linkage_chain),
    ("severity monotone in size", severity_monotone),
    ("part status is pure", status_is_pure),
];
