mod common;

use std::collections::HashSet;

use lpr::dataset::{
    batches, generate_synthetic, load_features, save_features, sidecar_path, Regime, Split, SyntheticConfig,
};
use lpr::Error;

fn example_config() -> SyntheticConfig {
    SyntheticConfig {
        num_states: 8,
        num_objects: 10,
        dim: 32,
        seen_fraction: 0.6,
        noise: 0.1,
        seed: 7,
        ..SyntheticConfig::default()
    }
}

#[test]
fn example_config_split_sizes() {
    let ds = generate_synthetic(&example_config()).unwrap();
    assert_eq!(ds.space.seen().len(), 48);
    assert!(ds.space.unseen().len() <= 32);
    assert_eq!(ds.space.open_world().len(), 80);
    let seen: HashSet<_> = ds.space.seen().iter().collect();
    assert!(ds.space.unseen().iter().all(|p| !seen.contains(p)));
    for s in 0..8 {
        assert!(ds.space.seen().iter().any(|p| p.state == s), "state {s} never seen");
    }
    for o in 0..10 {
        assert!(ds.space.seen().iter().any(|p| p.object == o), "object {o} never seen");
    }
}

#[test]
fn noiseless_features_are_nearest_to_their_own_prototypes() {
    let ds = generate_synthetic(&SyntheticConfig {
        noise: 0.0,
        ..example_config()
    })
    .unwrap();
    let seen_rows = common::composition_rows(&ds, ds.space.seen());
    let (mut states, mut objects, mut comps, mut comp_total) = (0, 0, 0, 0);
    for r in &ds.records {
        states += (common::nearest(&ds.bank.states, &r.feature) == r.label.state) as usize;
        objects += (common::nearest(&ds.bank.objects, &r.feature) == r.label.object) as usize;
        if ds.space.is_seen(r.label) {
            comp_total += 1;
            comps += (ds.space.seen()[common::nearest(&seen_rows, &r.feature)] == r.label) as usize;
        }
    }
    let n = ds.records.len();
    assert_eq!((states, objects), (n, n));
    assert_eq!(comps, comp_total);
}

#[test]
fn noise_does_not_move_labels_or_splits() {
    let clean = generate_synthetic(&SyntheticConfig {
        noise: 0.0,
        ..example_config()
    })
    .unwrap();
    let noisy = generate_synthetic(&example_config()).unwrap();
    assert_eq!(clean.space, noisy.space);
    assert_eq!(clean.bank, noisy.bank);
    let key = |d: &lpr::dataset::Dataset| d.records.iter().map(|r| (r.label, r.split)).collect::<Vec<_>>();
    assert_eq!(key(&clean), key(&noisy));
}

#[test]
fn generation_is_seeded() {
    let a = generate_synthetic(&example_config()).unwrap();
    let b = generate_synthetic(&example_config()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.content_hash(), b.content_hash());
    let c = generate_synthetic(&SyntheticConfig { seed: 8, ..example_config() }).unwrap();
    assert_ne!(a.content_hash(), c.content_hash());
}

#[test]
fn file_round_trip_with_sidecar() {
    let ds = generate_synthetic(&example_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.lprf");
    save_features(&path, &ds).unwrap();
    assert_eq!(load_features(&path).unwrap(), ds);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
    assert_eq!(meta["dim"], 32);
    assert_eq!(meta["sha256"], ds.content_hash());
    assert_eq!(meta["records"]["test"], ds.indices(Split::Test).len());
    assert_eq!(meta["open_world_size"], 80);
    assert!(!dir.path().join("ref.partial").exists());
}

#[test]
fn corrupted_files_fail_with_the_path() {
    let ds = generate_synthetic(&SyntheticConfig {
        num_states: 3,
        num_objects: 3,
        dim: 6,
        train_per_seen: 2,
        test_per_composition: 1,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.lprf");
    save_features(&path, &ds).unwrap();
    std::fs::remove_file(sidecar_path(&path)).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_features(&path).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
    assert!(err.to_string().contains("small.lprf"), "{err}");

    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"NOPE");
    std::fs::write(&path, &bad).unwrap();
    assert!(load_features(&path).unwrap_err().to_string().contains("magic"));

    assert!(matches!(load_features(&dir.path().join("missing.lprf")), Err(Error::Io(_))));
}

#[test]
fn candidate_sets_nest() {
    let ds = generate_synthetic(&example_config()).unwrap();
    let closed: HashSet<_> = ds.space.candidates(Regime::Closed).iter().collect();
    let open: HashSet<_> = ds.space.candidates(Regime::Open).iter().collect();
    assert!(closed.is_subset(&open));
    for r in ds.records.iter().filter(|r| r.split == Split::Test) {
        assert!(closed.contains(&r.label));
    }
}

#[test]
fn batches_cover_the_training_split_once() {
    let ds = generate_synthetic(&example_config()).unwrap();
    let mut all: Vec<usize> = batches(&ds.records, 64, 7, 1).concat();
    all.sort();
    assert_eq!(all, ds.indices(Split::Train));
}
