//! Saves a briefly trained model, reloads it and scores the held-out split.
//!
//! `cargo run --release --example evaluate_checkpoint`

use graphpine::checkpoint::{load_checkpoint, save_checkpoint};
use graphpine::dataprep::Split;
use graphpine::model::{GraphPineModel, ModelConfig};
use graphpine::synth::{generate, SynthConfig};
use graphpine::trainer::{evaluate, train, TrainConfig};

fn main() -> graphpine::Result<()> {
    let data = generate(&SynthConfig {
        nodes: 30,
        samples: 300,
        seed: 2,
        ..SynthConfig::default()
    })?;
    let b = &data.bundle;
    let cfg = ModelConfig {
        layers: 2,
        d_out: 16,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 40,
        batch_size: 8,
        lr: 0.01,
        patience: 10,
        seed: 2,
        ..TrainConfig::default()
    };
    let (best, _) = train(
        &GraphPineModel::new(cfg, 2)?,
        &b.dataset(Split::Train),
        &b.dataset(Split::Val),
        &tc,
    )?;

    let path = std::env::temp_dir().join("graphpine-eval.gpine");
    save_checkpoint(&best, b.graph.node_count(), &path)?;
    let (model, manifest) = load_checkpoint(&path)?;
    println!(
        "checkpoint v{} for {} genes, checksum {}",
        manifest.version, manifest.graph_nodes, manifest.checksum
    );

    for split in [Split::Val, Split::Test] {
        let e = evaluate(&model, &b.dataset(split))?;
        println!("\n{split}: mean loss {:.4}", e.mean_loss);
        print!("{}", e.metrics.table());
    }
    Ok(())
}
