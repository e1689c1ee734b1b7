use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use inspect_core::measurement::Severity;
use inspect_core::orchestrator::csv::{parse_csv, render_csv, CSV_HEADER};
use inspect_core::orchestrator::store::{csv_path, json_path, read_report, save_inspection, INDEX_FILE};
use inspect_core::orchestrator::{
    build_registry, thread_recall_rollup, InspectOptions, InspectionConfig, InspectionReport, Inspector, PartStatus,
    ReviewStore, Verdict,
};
use inspect_core::synth::{eight_part_scenario, part_description, PartsScenario, REVIEWED_IMAGE, REVIEWED_PART};
use inspect_core::InspectError;

fn at(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
}

fn inspector(s: &PartsScenario) -> Inspector {
    let config = InspectionConfig::default();
    let registry = build_registry(&config, Some(Arc::new(s.fixture.clone()))).unwrap();
    Inspector::new(config, registry).unwrap()
}

fn inspect_all(s: &PartsScenario, threads: usize) -> Vec<InspectionReport> {
    let inspector = inspector(s);
    let opts = InspectOptions {
        threads: Some(threads),
        created_at: Some(at(0)),
    };
    s.parts
        .iter()
        .map(|p| inspector.inspect_part(p, &opts).unwrap())
        .collect()
}

#[test]
fn eight_part_statuses() {
    let s = eight_part_scenario();
    let reports = inspect_all(&s, 4);
    let statuses: Vec<PartStatus> = reports.iter().map(|r| r.part_status).collect();
    assert_eq!(&statuses[..7], &[PartStatus::Rejected; 7]);
    assert_eq!(statuses[7], PartStatus::PendingReview);

    let mut counts = std::collections::BTreeMap::new();
    for r in &reports {
        for (sev, n) in r.severity_counts() {
            *counts.entry(sev).or_insert(0) += n;
        }
    }
    let total: usize = counts.values().sum();
    assert!(2 * counts[&Severity::Considerable] > total, "{counts:?}");

    let reviewed = &reports[7].defects;
    assert_eq!(reviewed.len(), 1);
    assert_eq!(reviewed[0].image_id, REVIEWED_IMAGE);
    assert_eq!(reviewed[0].size_mm, 1.6054);
    assert_eq!(reviewed[0].severity, Severity::Borderline);
}

#[test]
fn reports_independent_of_parallelism() {
    let s = eight_part_scenario();
    let csvs = |threads| -> Vec<String> {
        inspect_all(&s, threads)
            .iter()
            .map(|r| render_csv(r).unwrap())
            .collect()
    };
    let one = csvs(1);
    assert_eq!(one, csvs(2));
    assert_eq!(one, csvs(8));
    assert_eq!(one, csvs(1));
}

#[test]
fn defects_ordered_and_numbered() {
    let s = eight_part_scenario();
    for r in inspect_all(&s, 3) {
        for (i, d) in r.defects.iter().enumerate() {
            assert_eq!(d.defect_id, format!("{}-D{:03}", r.part_id, i + 1));
        }
        let keys: Vec<_> = r
            .defects
            .iter()
            .map(|d| (d.view, d.image_id.clone(), d.bbox.x(), d.bbox.y()))
            .collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn csv_and_json_round_trip() {
    let s = eight_part_scenario();
    for r in inspect_all(&s, 2) {
        let text = render_csv(&r).unwrap();
        assert!(text.starts_with(&format!("{}\n", CSV_HEADER.join(","))));
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed.defects, r.defects);
        assert_eq!(
            (parsed.part_id.as_str(), parsed.part_status),
            (r.part_id.as_str(), r.part_status)
        );
        // the only lines are header, one per defect, summary
        assert_eq!(text.lines().count(), r.defects.len() + 2);

        let json = serde_json::to_string(&r).unwrap();
        let back: InspectionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}

#[test]
fn clean_part_is_accepted_with_summary_row_only() {
    let mut s = eight_part_scenario();
    let part = part_description("P09");
    for img in s
        .fixture
        .images
        .keys()
        .filter(|k| k.starts_with("P01."))
        .cloned()
        .collect::<Vec<_>>()
    {
        s.fixture.add_image(&img.replacen("P01", "P09", 1));
    }
    let report = inspector(&s).inspect_part(&part, &InspectOptions::default()).unwrap();
    assert_eq!(report.part_status, PartStatus::Accepted);
    assert!(report.defects.is_empty());
    let text = render_csv(&report).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.ends_with(",accepted\n"));
}

#[test]
fn thread_rollup_counts_views() {
    let s = eight_part_scenario();
    let reports = inspect_all(&s, 2);
    let hits = thread_recall_rollup(&reports[1]);
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].thread_id, "front-T1");
    assert_eq!(hits[0].hit_count, 2);
    assert!(thread_recall_rollup(&reports[7]).is_empty());
}

fn saved_store(s: &PartsScenario) -> (tempfile::TempDir, ReviewStore) {
    let dir = tempfile::tempdir().unwrap();
    for r in inspect_all(s, 2) {
        save_inspection(dir.path(), &r).unwrap();
    }
    let store = ReviewStore::open(dir.path()).unwrap();
    (dir, store)
}

#[test]
fn review_flow_accepts_one_of_eight() {
    let s = eight_part_scenario();
    let (dir, store) = saved_store(&s);
    assert_eq!(store.parts().len(), 8);

    let pending = store.defects(REVIEWED_PART, Some(Severity::Borderline)).unwrap();
    assert_eq!(pending.len(), 1);
    let updated = store
        .submit(&pending[0].defect_id, Verdict::Accept, "supervisor", at(60))
        .unwrap();
    assert_eq!(updated.part_status, PartStatus::Accepted);

    let accepted = store
        .parts()
        .iter()
        .filter(|p| p.part_status == PartStatus::Accepted)
        .count();
    assert_eq!(accepted, 1);

    // persisted files reflect the verdict
    let on_disk = parse_csv(&std::fs::read_to_string(csv_path(dir.path(), REVIEWED_PART)).unwrap()).unwrap();
    assert_eq!(on_disk.part_status, PartStatus::Accepted);
    assert_eq!(on_disk.defects[0].verdict, Some(Verdict::Accept));
    let sidecar = read_report(&json_path(dir.path(), REVIEWED_PART)).unwrap();
    assert_eq!(sidecar.verdicts.len(), 1);

    // a reopened store sees the same state
    let reopened = ReviewStore::open(dir.path()).unwrap();
    assert_eq!(reopened.report(REVIEWED_PART).unwrap(), updated);

    let index = std::fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap();
    let lines: Vec<&str> = index.lines().collect();
    assert_eq!(lines.len(), 1 + 8 + 1);
    assert!(lines.last().unwrap().contains(",accepted,"));
    assert!(lines.last().unwrap().contains(",verdict,"));
}

#[test]
fn later_verdict_wins() {
    let s = eight_part_scenario();
    let (_dir, store) = saved_store(&s);
    let id = store.defects(REVIEWED_PART, Some(Severity::Borderline)).unwrap()[0]
        .defect_id
        .clone();
    store.submit(&id, Verdict::Reject, "a", at(50)).unwrap();
    let after_stale = store.submit(&id, Verdict::Accept, "b", at(40)).unwrap();
    assert_eq!(after_stale.part_status, PartStatus::Rejected);
    let after_fresh = store.submit(&id, Verdict::Accept, "b", at(70)).unwrap();
    assert_eq!(after_fresh.part_status, PartStatus::Accepted);
}

#[test]
fn verdict_errors() {
    let s = eight_part_scenario();
    let (_dir, store) = saved_store(&s);
    let considerable = store.defects("P01", Some(Severity::Considerable)).unwrap()[0]
        .defect_id
        .clone();
    assert!(matches!(
        store.submit(&considerable, Verdict::Accept, "qa", at(1)),
        Err(InspectError::Usage(_))
    ));
    assert!(matches!(
        store.submit("P01-D999", Verdict::Accept, "qa", at(1)),
        Err(InspectError::Lookup(_))
    ));
    assert!(matches!(store.report("P99"), Err(InspectError::Lookup(_))));
}

#[test]
fn concurrent_verdicts_are_serialized() {
    let s = eight_part_scenario();
    let (_dir, store) = saved_store(&s);
    let store = Arc::new(store);
    let id = store.defects("P07", Some(Severity::Borderline)).unwrap()[0]
        .defect_id
        .clone();
    let handles: Vec<_> = (0..8)
        .map(|k| {
            let (store, id) = (store.clone(), id.clone());
            std::thread::spawn(move || {
                let v = if k % 2 == 0 { Verdict::Accept } else { Verdict::Reject };
                store.submit(&id, v, &format!("r{k}"), at(k)).unwrap();
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let r = store.report("P07").unwrap();
    assert_eq!(r.verdicts.len(), 8);
    // latest timestamp (k = 7) rejects; the part also has a considerable defect
    let d = r.defect(&id).unwrap();
    assert_eq!(d.verdict, Some(Verdict::Reject));
    assert_eq!(r.part_status, PartStatus::Rejected);
}

#[test]
fn config_digest_recorded() {
    let s = eight_part_scenario();
    let reports = inspect_all(&s, 1);
    let digest = &reports[0].config_digest;
    assert_eq!(digest.len(), 64);
    assert!(reports.iter().all(|r| &r.config_digest == digest));
}
