//! Top-k gene explanation for one drug/cell pair, printed as DOT.
//!
//! `cargo run --release --example explain_pair [K]`

use graphpine::analysis::export_explanation;
use graphpine::dataprep::Split;
use graphpine::ip_layer::GraphLayout;
use graphpine::model::{GraphPineModel, ModelConfig};
use graphpine::synth::{generate, SynthConfig};
use graphpine::trainer::{train, TrainConfig};

fn main() -> graphpine::Result<()> {
    let k = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let data = generate(&SynthConfig {
        nodes: 30,
        samples: 200,
        seed: 3,
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
        epochs: 30,
        batch_size: 8,
        lr: 0.01,
        seed: 3,
        ..TrainConfig::default()
    };
    let (model, _) = train(
        &GraphPineModel::new(cfg, 3)?,
        &b.dataset(Split::Train),
        &b.dataset(Split::Val),
        &tc,
    )?;

    let sample = &b.dataset(Split::Test).samples[0];
    let pred = model.predict(sample, &GraphLayout::new(&b.graph))?;
    let ex = export_explanation(sample, &pred, &b.graph, k)?;
    println!("{} on {}: p = {:.3}, label {}", ex.drug, ex.cell, ex.prob, ex.label);
    for g in &ex.genes {
        println!(
            "  #{:<2} {}  initial {:.3}  final {:.3}",
            g.rank, g.gene, g.initial, g.final_score
        );
    }
    println!("\n{}", ex.to_dot());
    Ok(())
}
