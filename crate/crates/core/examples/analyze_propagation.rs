//! How far importance moves between the drug prior and the last layer.
//!
//! `cargo run --release --example analyze_propagation`

use graphpine::analysis::{compare_importance, propagation_stats};
use graphpine::dataprep::Split;
use graphpine::ip_layer::GraphLayout;
use graphpine::model::{GraphPineModel, ModelConfig};
use graphpine::synth::{generate, SynthConfig};
use graphpine::trainer::{predict_all, train, TrainConfig};

fn main() -> graphpine::Result<()> {
    let data = generate(&SynthConfig {
        nodes: 30,
        samples: 200,
        seed: 4,
        ..SynthConfig::default()
    })?;
    let b = &data.bundle;
    let cfg = ModelConfig {
        layers: 3,
        d_out: 16,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs: 30,
        batch_size: 8,
        lr: 0.01,
        seed: 4,
        ..TrainConfig::default()
    };
    let (model, _) = train(
        &GraphPineModel::new(cfg, 4)?,
        &b.dataset(Split::Train),
        &b.dataset(Split::Val),
        &tc,
    )?;

    let test = b.dataset(Split::Test);
    let preds = predict_all(&model, &test, &GraphLayout::new(&b.graph))?;
    let pairs: Vec<(&[f64], &[f64])> = test
        .samples
        .iter()
        .zip(&preds)
        .map(|(s, p)| (&s.importance[..], &p.final_importance[..]))
        .collect();

    let (before, after) = pairs[0];
    println!("first pair: {:?}", compare_importance(before, after)?);
    let stats = propagation_stats(&pairs)?;
    println!("{}", serde_json::to_string_pretty(&stats).expect("plain data"));
    Ok(())
}
