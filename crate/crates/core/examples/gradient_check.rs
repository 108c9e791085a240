//! Finite-difference check of every model gradient on a six-gene graph.
//!
//! `cargo run --example gradient_check`

use std::sync::Arc;

use graphpine::dataprep::{ImportanceVector, SampleTensor};
use graphpine::ip_layer::GraphLayout;
use graphpine::model::{GraphPineModel, Mode, ModelConfig, FEATURE_DIM};
use graphpine::nn::{finite_diff_check, Tensor};
use graphpine::GeneGraph;

fn main() -> graphpine::Result<()> {
    let genes = ["TP53", "MDM2", "EGFR", "KRAS", "BRAF", "MYC"];
    let edges = [
        ("TP53", "controls-expression-of", "MDM2"),
        ("MDM2", "controls-state-change-of", "TP53"),
        ("EGFR", "interacts-with", "KRAS"),
        ("KRAS", "controls-state-change-of", "BRAF"),
        ("BRAF", "catalysis-precedes", "MYC"),
        ("MYC", "controls-expression-of", "TP53"),
    ];
    let graph = GeneGraph::build(&genes, &edges)?;
    let layout = GraphLayout::new(&graph);
    let features: Vec<f64> = (0..6 * FEATURE_DIM)
        .map(|i| ((i * 37 % 17) as f64 - 8.0) / 6.0)
        .collect();
    let sample = SampleTensor {
        drug_id: "erlotinib".into(),
        cell_id: "A549".into(),
        features: Arc::new(Tensor::from_vec(6, FEATURE_DIM, features)?),
        importance: Arc::new(ImportanceVector(vec![0.0, 0.0, 1.0, 0.6, 0.0, 0.0])),
        label: 1,
    };

    let cfg = ModelConfig {
        layers: 2,
        d_out: 4,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let model = GraphPineModel::new(cfg, 0)?;
    let report = finite_diff_check(
        |p, tape| GraphPineModel::loss_on(tape, p, &cfg, &sample, &layout, Mode::Eval),
        &model.params,
        1e-5,
    )?;
    println!("{} parameters checked", report.checked);
    println!(
        "worst: {}[{}] analytic {:.6e} numeric {:.6e} (relative error {:.2e})",
        report.param, report.index, report.analytic, report.numeric, report.max_rel_error
    );
    Ok(())
}
