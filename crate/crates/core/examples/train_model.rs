//! Trains on a small synthetic set with early stopping and saves the best checkpoint.
//!
//! `cargo run --release --example train_model [OUT_DIR]`

use std::path::PathBuf;

use graphpine::checkpoint::save_checkpoint;
use graphpine::dataprep::Split;
use graphpine::model::{GraphPineModel, ModelConfig};
use graphpine::synth::{generate, SynthConfig};
use graphpine::trainer::{train, TrainConfig};

fn main() -> graphpine::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("graphpine-train"));
    std::fs::create_dir_all(&out).expect("create output directory");

    let data = generate(&SynthConfig {
        nodes: 30,
        samples: 300,
        seed: 1,
        ..SynthConfig::default()
    })?;
    let cfg = ModelConfig {
        layers: 2,
        d_out: 16,
        dropout: 0.1,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 60,
        batch_size: 8,
        lr: 0.01,
        patience: 10,
        seed: 1,
        ..TrainConfig::default()
    };

    let model = GraphPineModel::new(cfg, tc.seed)?;
    println!("{} parameters", model.param_count());
    let b = &data.bundle;
    let (best, log) = train(&model, &b.dataset(Split::Train), &b.dataset(Split::Val), &tc)?;
    for r in &log.records {
        let mark = if r.improved { "*" } else { "" };
        println!(
            "epoch {:>3}  train {:.4}  val {:.4} {mark}",
            r.epoch, r.train_loss, r.val_loss
        );
    }
    println!("stopped: {:?}, best epoch {:?}", log.stop_reason(), log.best_epoch());

    save_checkpoint(&best, b.graph.node_count(), &out.join("checkpoint.gpine"))?;
    log.write_jsonl(&out.join("trainlog.jsonl"))?;
    println!("saved to {}", out.display());
    Ok(())
}
