use std::io::Write;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use replyclass_core::clustering::{ClusterSet, Partition};
use replyclass_core::corpus::ResponseTable;
use replyclass_core::responseclasses::{
    import_classes_from, parse_action_log, read_action_log, ActionKind, ActionLog, MergeAction, MergeSession,
};

fn session(n_clusters: usize) -> (MergeSession, replyclass_core::clustering::ClusterExport) {
    let counts: Vec<(String, u64)> = (0..n_clusters * 2).map(|i| (format!("response {i}"), 100 - i as u64)).collect();
    let table = ResponseTable::from_counts(&counts).unwrap();
    let groups = (0..n_clusters as u32).map(|c| vec![2 * c, 2 * c + 1]).collect();
    let cs = ClusterSet::from_partition(&Partition::new(groups), &table).unwrap();
    let export = cs.export(&table);
    (MergeSession::from_export(&export, n_clusters).unwrap(), export)
}

/// A plausible next action; sometimes invalid on purpose.
fn random_action(s: &MergeSession, rng: &mut ChaCha8Rng) -> MergeAction {
    let cluster_id = match s.next_centroid() {
        Some(v) if rng.gen_bool(0.95) => v.cluster.id,
        _ => rng.gen_range(0..40),
    };
    let kind = match rng.gen_range(0..10) {
        0..=2 => ActionKind::Assign {
            cluster_id,
            class_id: rng.gen_range(0..=s.classes().len() as u32),
        },
        3..=5 => ActionKind::Create {
            cluster_id,
            name: format!("name {}", rng.gen_range(0..6)),
            exemplar: rng.gen_bool(0.5).then(|| "edited".to_string()),
        },
        6..=7 => ActionKind::Skip { cluster_id },
        _ => ActionKind::Undo,
    };
    MergeAction {
        kind,
        timestamp_ms: rng.gen(),
        actor: "prop".into(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn replay_equals_live(seed: u64, steps in 1usize..60, n_clusters in 1usize..12) {
        let (mut live, export) = session(n_clusters);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            let before = live.clone();
            if live.apply(random_action(&live, &mut rng)).is_err() {
                prop_assert_eq!(&live, &before);
            }
            prop_assert_eq!(&MergeSession::replay(&export, n_clusters, live.log()).unwrap(), &live);
        }
    }

    #[test]
    fn undo_restores_classes_and_cursor(seed: u64, steps in 0usize..30) {
        let (mut s, _) = session(10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            let _ = s.apply(random_action(&s, &mut rng));
        }
        let a = random_action(&s, &mut rng);
        if matches!(a.kind, ActionKind::Undo) {
            return Ok(());
        }
        let before = s.clone();
        if s.apply(a).is_ok() {
            s.apply(MergeAction::new(ActionKind::Undo, "prop")).unwrap();
            prop_assert_eq!(s.classes(), before.classes());
            prop_assert_eq!(s.cursor(), before.cursor());
        }
    }
}

#[test]
fn crash_at_every_prefix_replays_to_acknowledged_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("actions.jsonl");
    let (mut live, export) = session(8);
    let mut log = ActionLog::open(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..80 {
        let a = random_action(&live, &mut rng);
        if live.apply(a.clone()).is_ok() {
            log.append(&a).unwrap();
        }
        // a process restarted now sees exactly the acknowledged actions
        let restarted = MergeSession::replay(&export, 8, &read_action_log(&path).unwrap()).unwrap();
        assert_eq!(restarted, live);
    }
}

#[test]
fn torn_tail_is_dropped_but_corruption_is_not() {
    let a = MergeAction {
        kind: ActionKind::Skip { cluster_id: 0 },
        timestamp_ms: 1,
        actor: "x".into(),
    };
    let mut good = serde_json::to_vec(&a).unwrap();
    good.push(b'\n');
    let mut torn = good.clone();
    torn.extend_from_slice(b"{\"kind\":\"sk");
    assert_eq!(parse_action_log(torn.as_slice()).unwrap(), vec![a.clone()]);

    let mut corrupt = b"not json\n".to_vec();
    corrupt.extend_from_slice(&good);
    assert!(parse_action_log(corrupt.as_slice()).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log");
    std::fs::File::create(&path).unwrap().write_all(&torn).unwrap();
    assert_eq!(read_action_log(&path).unwrap().len(), 1);
    assert!(read_action_log(dir.path().join("missing")).unwrap().is_empty());

    // a whole entry that never got its newline was not acknowledged
    let mut unterminated = good.clone();
    unterminated.extend_from_slice(&good[..good.len() - 1]);
    assert_eq!(parse_action_log(unterminated.as_slice()).unwrap(), vec![a.clone()]);
}

#[test]
fn reopening_after_a_torn_write_keeps_the_log_clean() {
    let a = MergeAction {
        kind: ActionKind::Skip { cluster_id: 0 },
        timestamp_ms: 1,
        actor: "x".into(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log");
    let mut bytes = serde_json::to_vec(&a).unwrap();
    bytes.extend_from_slice(b"\n{\"kind\":\"sk");
    std::fs::write(&path, &bytes).unwrap();

    let mut log = ActionLog::open(&path).unwrap();
    log.append(&a).unwrap();
    drop(log);
    assert_eq!(read_action_log(&path).unwrap(), vec![a.clone(), a]);
}

#[test]
fn exported_catalog_round_trips_with_integrity() {
    let (mut s, _) = session(4);
    let counts: Vec<(String, u64)> = (0..8).map(|i| (format!("response {i}"), 100 - i as u64)).collect();
    let table = ResponseTable::from_counts(&counts).unwrap();
    let cs = ClusterSet::from_partition(&Partition::new((0..4).map(|c| vec![2 * c, 2 * c + 1]).collect()), &table)
        .unwrap();
    for kind in [
        ActionKind::Create {
            cluster_id: s.next_centroid().unwrap().cluster.id,
            name: "a".into(),
            exemplar: None,
        },
        ActionKind::Skip {
            cluster_id: s.queue()[1].id,
        },
        ActionKind::Assign {
            cluster_id: s.queue()[2].id,
            class_id: 0,
        },
    ] {
        s.apply(MergeAction::new(kind, "t")).unwrap();
    }
    let catalog = s.export_classes().unwrap();
    let mut buf = Vec::new();
    catalog.write(&mut buf, None).unwrap();
    let (back, file) = import_classes_from(buf.as_slice(), Some(&cs)).unwrap();
    assert_eq!(back, catalog);
    assert_eq!(file.hash, catalog.hash());
    assert_eq!(back.classes()[0].exemplar_text, "response 0");
    assert_eq!(back.classes()[0].member_response_ids.len(), 4);
}
