//! Checkpoint fixtures and round-trip checks.
#![allow(dead_code)]

use std::path::Path;

use graphpine::checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
use graphpine::dataprep::SampleTensor;
use graphpine::ip_layer::{GateMode, GraphLayout};
use graphpine::model::{GraphPineModel, ModelConfig, FEATURE_DIM};
use graphpine::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Ten model/graph fixtures of varying depth, width and head count.
pub fn fixtures() -> Vec<(GraphPineModel, GraphLayout, Vec<SampleTensor>)> {
    (0..10u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i);
            let heads = 1 + (i as usize % 2);
            let cfg = ModelConfig {
                layers: 1 + i as usize % 3,
                d_out: heads * (2 + i as usize % 4),
                heads,
                gate: if i == 9 { GateMode::Bypass } else { GateMode::Learned },
                ..ModelConfig::default()
            };
            let model = GraphPineModel::new(cfg, i).unwrap();
            let n = rng.random_range(4..15);
            let edges = random_edges(n, 2 * n, &mut rng);
            let layout = GraphLayout::new(&build_graph(&names(n), &edges));
            let samples = (0..5)
                .map(|_| {
                    sample(
                        random_matrix(n, FEATURE_DIM, 2.0, &mut rng),
                        random_importance(n, &mut rng),
                        1,
                    )
                })
                .collect();
            (model, layout, samples)
        })
        .collect()
}

/// Predictions before and after save + load, as the largest relative difference.
pub fn round_trip_error(dir: &std::path::Path) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, (model, layout, samples)) in fixtures().into_iter().enumerate() {
        let path = dir.join(format!("m{k}.gpine"));
        save_checkpoint(&model, layout.nodes, &path).unwrap();
        let (back, manifest) = load_checkpoint(&path).unwrap();
        assert_eq!(manifest.graph_nodes, layout.nodes);
        assert_eq!(back.config, model.config);
        for s in &samples {
            let a = model.predict(s, &layout).unwrap();
            let b = back.predict(s, &layout).unwrap();
            worst = worst.max((a.prob - b.prob).abs() / a.prob.abs().max(1e-12));
        }
    }
    worst
}

/// Flipped bytes, truncation, bad magic, an edited version and a width
/// mismatch must all fail to load.
pub fn check_corruption(dir: &Path) {
    let (model, layout, _) = fixtures().remove(0);
    let path = dir.join("m.gpine");
    save_checkpoint(&model, layout.nodes, &path).unwrap();
    let good = std::fs::read(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // every single-byte flip in the data section fails the checksum
    let json_len = u64::from_le_bytes(good[8..16].try_into().unwrap()) as usize;
    for _ in 0..50 {
        let mut bad = good.clone();
        let i = rng.random_range(16 + json_len..bad.len());
        bad[i] ^= 1 << rng.random_range(0..8);
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::CorruptManifest(_))));
    }
    for cut in [0, 7, 15, 16 + json_len / 2, good.len() - 1] {
        std::fs::write(&path, &good[..cut]).unwrap();
        assert!(load_checkpoint(&path).is_err(), "cut at {cut}");
    }
    let mut bad = good.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::CorruptManifest(_))));

    // a manifest edited to a different version
    let text = String::from_utf8(good[16..16 + json_len].to_vec()).unwrap();
    let edited = text.replacen("\"version\":1", "\"version\":7", 1);
    assert_ne!(edited, text);
    let mut bad = good[..8].to_vec();
    bad.extend_from_slice(&(edited.len() as u64).to_le_bytes());
    bad.extend_from_slice(edited.as_bytes());
    bad.extend_from_slice(&good[16 + json_len..]);
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::VersionMismatch(_))));

    std::fs::write(&path, &good).unwrap();
    let other = ModelConfig {
        d_out: model.config.d_out + 2,
        ..model.config
    };
    assert!(matches!(
        load_checkpoint_expecting(&path, &other),
        Err(Error::VersionMismatch(_))
    ));
    assert!(load_checkpoint_expecting(&path, &model.config).is_ok());
}
