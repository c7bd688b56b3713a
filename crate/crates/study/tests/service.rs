use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use histoprompt_core::stats::{analyze_readers, read_responses_csv};
use histoprompt_study::log::{Event, EventLog};
use histoprompt_study::{build_study, ManualClock, NextItem, StudyDefinition, StudyError, StudyService};
use proptest::prelude::*;

fn study(n_real: usize, n_synth: usize) -> StudyDefinition {
    let real: Vec<PathBuf> = (0..n_real).map(|i| format!("real/{i}.png").into()).collect();
    let synth: Vec<PathBuf> = (0..n_synth).map(|i| format!("synth/{i}.png").into()).collect();
    build_study("pilot", &real, &synth, 11)
}

fn open(def: &StudyDefinition, dir: &Path, clock: Arc<ManualClock>) -> StudyService {
    StudyService::open(vec![def.clone()], dir, clock).unwrap()
}

fn current(svc: &StudyService, sid: &str) -> Option<String> {
    match svc.next_item(sid).unwrap() {
        NextItem::Item { item_id, .. } => Some(item_id),
        NextItem::Complete { .. } => None,
    }
}

fn answer_all(svc: &StudyService, clock: &ManualClock, sid: &str, choice: &str) -> usize {
    let mut n = 0;
    while let Some(item) = current(svc, sid) {
        clock.advance(1.5);
        svc.submit_response(sid, &item, choice, None).unwrap();
        n += 1;
    }
    n
}

#[test]
fn default_session_covers_every_item_once() {
    let dir = tempfile::tempdir().unwrap();
    let def = study(20, 20);
    let svc = open(&def, dir.path(), Arc::new(ManualClock::new(0.0)));
    let sid = svc.create_session("pilot", "r1", None).unwrap();
    let view = svc.session(&sid).unwrap();
    assert_eq!(view.item_order.len(), 40);
    let ids: BTreeSet<&str> = view.item_order.iter().map(String::as_str).collect();
    let all: BTreeSet<&str> = def.items.iter().map(|i| i.item_id.as_str()).collect();
    assert_eq!(ids, all);
    assert_eq!((def.n_real(), def.n_synth()), (20, 20));
    assert_eq!(current(&svc, &sid).as_deref(), Some(view.item_order[0].as_str()));
}

#[test]
fn seeds_permute_the_same_items() {
    let dir = tempfile::tempdir().unwrap();
    let def = study(20, 20);
    let svc = open(&def, dir.path(), Arc::new(ManualClock::new(0.0)));
    let a = svc.session(&svc.create_session("pilot", "r1", Some(1)).unwrap()).unwrap().item_order;
    let b = svc.session(&svc.create_session("pilot", "r2", Some(2)).unwrap()).unwrap().item_order;
    let (mut sa, mut sb) = (a.clone(), b.clone());
    sa.sort();
    sb.sort();
    assert_eq!(sa, sb);
    assert_ne!(a, b);
}

#[test]
fn duplicate_session_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(&study(2, 2), dir.path(), Arc::new(ManualClock::new(0.0)));
    svc.create_session("pilot", "r1", Some(5)).unwrap();
    let err = svc.create_session("pilot", "r1", Some(5)).unwrap_err();
    assert!(matches!(err, StudyError::DuplicateSession { .. }));
    assert!(matches!(svc.create_session("other", "r1", None), Err(StudyError::UnknownStudy(_))));
    assert!(matches!(svc.create_session("pilot", " ", None), Err(StudyError::BadRequest(_))));
}

#[test]
fn repeated_next_keeps_item_and_serve_time() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(100.0));
    let svc = open(&study(2, 2), dir.path(), clock.clone());
    let sid = svc.create_session("pilot", "r1", None).unwrap();
    let first = svc.next_item(&sid).unwrap();
    let served = svc.session(&sid).unwrap().served_at;
    clock.advance(30.0);
    assert_eq!(svc.next_item(&sid).unwrap(), first);
    assert_eq!(svc.session(&sid).unwrap().served_at, served);
    assert_eq!(served, Some(100.0));
}

#[test]
fn lead_time_is_server_measured() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(10.0));
    let svc = open(&study(2, 2), dir.path(), clock.clone());
    let sid = svc.create_session("pilot", "r1", None).unwrap();
    let item = current(&svc, &sid).unwrap();
    clock.advance(7.25);
    let rec = svc.submit_response(&sid, &item, "maybe_synthetic", Some("grainy".into())).unwrap();
    assert_eq!(rec.lead_time_s, 7.25);
    assert_eq!(rec.comment.as_deref(), Some("grainy"));
    assert_eq!(svc.session(&sid).unwrap().cursor, 1);
    // A clock that steps backwards never yields a negative lead time.
    let next = current(&svc, &sid).unwrap();
    clock.set(0.0);
    assert_eq!(svc.submit_response(&sid, &next, "definitely_real", None).unwrap().lead_time_s, 0.0);
}

#[test]
fn submission_errors() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0.0));
    let svc = open(&study(2, 2), dir.path(), clock.clone());
    let sid = svc.create_session("pilot", "r1", None).unwrap();
    let order = svc.session(&sid).unwrap().item_order;

    // Nothing served yet.
    assert!(matches!(
        svc.submit_response(&sid, &order[0], "maybe_real", None),
        Err(StudyError::NotServed(_))
    ));
    current(&svc, &sid);
    assert!(matches!(
        svc.submit_response(&sid, &order[0], "unsure", None),
        Err(StudyError::InvalidChoice(_))
    ));
    assert!(matches!(
        svc.submit_response(&sid, &order[1], "maybe_real", None),
        Err(StudyError::OutOfOrder { .. })
    ));
    svc.submit_response(&sid, &order[0], "maybe_real", None).unwrap();
    current(&svc, &sid);
    // The answered item is gone for good.
    assert!(matches!(
        svc.submit_response(&sid, &order[0], "maybe_real", None),
        Err(StudyError::OutOfOrder { .. })
    ));
    assert!(matches!(svc.next_item("s-nope"), Err(StudyError::UnknownSession(_))));
    assert_eq!(svc.session(&sid).unwrap().cursor, 1);

    answer_all(&svc, &clock, &sid, "maybe_real");
    assert_eq!(svc.next_item(&sid).unwrap(), NextItem::Complete { complete: true });
    assert!(matches!(
        svc.submit_response(&sid, &order[3], "maybe_real", None),
        Err(StudyError::AlreadyAnswered(_))
    ));
}

#[test]
fn export_schema_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0.0));
    let def = study(20, 20);
    let svc = open(&def, dir.path(), clock.clone());
    let header_only = String::from_utf8(svc.export_csv("pilot").unwrap()).unwrap();
    assert_eq!(header_only, "reader_id,item_id,truth,choice,lead_time_s,comment\n");

    let b = svc.create_session("pilot", "reader-b", None).unwrap();
    let a = svc.create_session("pilot", "reader-a", None).unwrap();
    // Interleave the two readers.
    for _ in 0..40 {
        for (sid, choice) in [(&b, "maybe_real"), (&a, "definitely_synthetic")] {
            let item = current(&svc, sid).unwrap();
            clock.advance(2.0);
            svc.submit_response(sid, &item, choice, None).unwrap();
        }
    }
    let records = read_responses_csv(svc.export_csv("pilot").unwrap().as_slice()).unwrap();
    assert_eq!(records.len(), 80);
    assert!(records[..40].iter().all(|r| r.reader_id == "reader-a"));
    let order_a = svc.session(&a).unwrap().item_order;
    let exported: Vec<&String> = records[..40].iter().map(|r| &r.item_id).collect();
    assert_eq!(exported, order_a.iter().collect::<Vec<_>>());
    for r in &records {
        assert_eq!(r.truth, def.item(&r.item_id).unwrap().truth);
        assert_eq!(r.lead_time_s, 2.0);
    }
    // Export feeds the analysis unchanged.
    let in_memory = analyze_readers(&svc.responses("pilot").unwrap()).unwrap();
    assert_eq!(analyze_readers(&records).unwrap(), in_memory);
    let a_perf = &in_memory[0];
    assert_eq!(a_perf.sensitivity, 1.0);
    assert_eq!(a_perf.specificity, 0.0);
}

#[test]
fn replay_restores_state_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0.0));
    let def = study(3, 3);
    let (sid, before, view) = {
        let svc = open(&def, dir.path(), clock.clone());
        let sid = svc.create_session("pilot", "r1", None).unwrap();
        for _ in 0..2 {
            let item = current(&svc, &sid).unwrap();
            clock.advance(4.0);
            svc.submit_response(&sid, &item, "maybe_real", None).unwrap();
        }
        // Served but not yet answered when the process dies.
        current(&svc, &sid);
        (sid.clone(), svc.export_csv("pilot").unwrap(), svc.session(&sid).unwrap())
    };
    clock.advance(100.0);
    let svc = open(&def, dir.path(), clock.clone());
    assert_eq!(svc.export_csv("pilot").unwrap(), before);
    assert_eq!(svc.session(&sid).unwrap(), view);
    assert!(matches!(
        svc.create_session("pilot", "r1", None),
        Err(StudyError::DuplicateSession { .. })
    ));
    // The pending item keeps its original serve time across the restart.
    let item = current(&svc, &sid).unwrap();
    let rec = svc.submit_response(&sid, &item, "maybe_real", None).unwrap();
    assert_eq!(rec.lead_time_s, 100.0);
}

#[test]
fn torn_trailing_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0.0));
    let def = study(2, 2);
    let sid = {
        let svc = open(&def, dir.path(), clock.clone());
        let sid = svc.create_session("pilot", "r1", None).unwrap();
        current(&svc, &sid);
        sid
    };
    let path = EventLog::path_for(dir.path(), "pilot");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(br#"{"event":"response_recorded","sess"#);
    std::fs::write(&path, bytes).unwrap();
    let svc = open(&def, dir.path(), clock.clone());
    let item = current(&svc, &sid).unwrap();
    svc.submit_response(&sid, &item, "maybe_real", None).unwrap();
    drop(svc);
    let svc = open(&def, dir.path(), clock);
    assert_eq!(svc.responses("pilot").unwrap().len(), 1);
}

#[derive(Debug, Clone)]
enum Step {
    Next(usize),
    Answer(usize, usize),
    Stale(usize),
    Wait(u8),
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        (0..3usize).prop_map(Step::Next),
        (0..3usize, 0..5usize).prop_map(|(r, c)| Step::Answer(r, c)),
        (0..3usize).prop_map(Step::Stale),
        any::<u8>().prop_map(Step::Wait),
    ]
}

const CHOICES: [&str; 5] = ["definitely_real", "maybe_real", "maybe_synthetic", "definitely_synthetic", "unsure"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Arbitrary interleavings keep answered ids a prefix of the order, lead
    /// times non-negative, serve times non-decreasing and exports monotone.
    #[test]
    fn session_invariants(steps in prop::collection::vec(step(), 1..80)) {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(0.0));
        let def = study(3, 3);
        let svc = open(&def, dir.path(), clock.clone());
        let sids: Vec<String> = (0..3)
            .map(|r| svc.create_session("pilot", &format!("r{r}"), None).unwrap())
            .collect();
        let mut previous_export: Vec<_> = Vec::new();
        for s in steps {
            match s {
                Step::Next(r) => { svc.next_item(&sids[r]).unwrap(); }
                Step::Answer(r, c) => {
                    let view = svc.session(&sids[r]).unwrap();
                    if let Some(item) = view.item_order.get(view.cursor) {
                        let before = view.cursor;
                        let ok = svc.submit_response(&sids[r], item, CHOICES[c], None).is_ok();
                        let after = svc.session(&sids[r]).unwrap().cursor;
                        prop_assert_eq!(after, before + usize::from(ok));
                        prop_assert_eq!(ok, c < 4 && view.served_at.is_some());
                    }
                }
                Step::Stale(r) => {
                    let view = svc.session(&sids[r]).unwrap();
                    if view.cursor > 0 {
                        let stale = &view.item_order[view.cursor - 1];
                        prop_assert!(svc.submit_response(&sids[r], stale, "maybe_real", None).is_err());
                    }
                }
                Step::Wait(t) => clock.advance(f64::from(t) / 8.0),
            }
            let export = read_responses_csv(svc.export_csv("pilot").unwrap().as_slice()).unwrap();
            for row in &previous_export {
                prop_assert!(export.contains(row));
            }
            previous_export = export;
        }
        for sid in &sids {
            let view = svc.session(sid).unwrap();
            let answered: Vec<String> = svc
                .responses("pilot")
                .unwrap()
                .into_iter()
                .filter(|r| r.reader_id == view.reader_id)
                .map(|r| r.item_id)
                .collect();
            prop_assert_eq!(&answered[..], &view.item_order[..view.cursor]);
        }
        let (_, events) = EventLog::open(&EventLog::path_for(dir.path(), "pilot")).unwrap();
        let mut last_served = std::collections::HashMap::new();
        for e in events {
            match e {
                Event::ItemServed { session_id, at, .. } => {
                    let prev = last_served.insert(session_id, at).unwrap_or(f64::NEG_INFINITY);
                    prop_assert!(at >= prev);
                }
                Event::ResponseRecorded { lead_time_s, .. } => prop_assert!(lead_time_s >= 0.0),
                Event::SessionCreated { .. } => {}
            }
        }
        let truthful = svc.responses("pilot").unwrap().iter().all(|r| {
            def.item(&r.item_id).map(|i| i.truth) == Some(r.truth)
        });
        prop_assert!(truthful);
    }
}
