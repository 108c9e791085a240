//! Generates a planted-signal dataset and checks the hidden labelling rule.
//!
//! `cargo run --example synth_dataset [SEED]`

use graphpine::dataprep::{Split, DEFAULT_IC50_THRESHOLD};
use graphpine::synth::{generate, planted_score, SynthConfig};

fn main() -> graphpine::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let data = generate(&cfg)?;
    let b = &data.bundle;
    let (drugs, cells) = cfg.grid();
    println!(
        "{} genes, {} edges, {drugs} drugs x {cells} cell lines",
        b.graph.node_count(),
        b.graph.edge_count()
    );

    for split in [Split::Train, Split::Val, Split::Test] {
        let ds = b.dataset(split);
        let pos = ds.samples.iter().filter(|s| s.label == 1).count();
        println!("{:<5} {:>4} pairs, {pos:>4} sensitive", split.to_string(), ds.len());
    }

    // every label comes from the planted score, and agrees with the IC50 cut
    let agree = b
        .records
        .iter()
        .filter(|r| {
            let s = planted_score(&b.importance[r.drug], &b.features[r.cell], &data.hidden_w);
            u8::from(s > data.median_score) == r.label && (r.log_ic50 < DEFAULT_IC50_THRESHOLD) == (r.label == 1)
        })
        .count();
    println!("planted rule reproduces {agree}/{} labels", b.records.len());
    Ok(())
}
