mod common;

use common::checkpoint::{check_corruption, fixtures, round_trip_error};
use graphpine::checkpoint::{load_checkpoint, save_checkpoint};

#[test]
fn ten_fixtures_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let err = round_trip_error(dir.path());
    assert!(err < 1e-6, "{err}");
}

#[test]
fn reload_is_bit_stable() {
    // values already at f32 precision survive a second round trip exactly
    let dir = tempfile::tempdir().unwrap();
    let (model, layout, _) = fixtures().remove(3);
    let p1 = dir.path().join("a.gpine");
    let p2 = dir.path().join("b.gpine");
    save_checkpoint(&model, layout.nodes, &p1).unwrap();
    let (once, _) = load_checkpoint(&p1).unwrap();
    save_checkpoint(&once, layout.nodes, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn corrupted_files_rejected() {
    let dir = tempfile::tempdir().unwrap();
    check_corruption(dir.path());
}
