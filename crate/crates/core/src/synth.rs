//! Planted-signal synthetic datasets.
//!
//! Labels depend on the interaction between a drug's importance prior and
//! the cell line's node features: `score = Σ_i I_i · (w · X_i)` for a hidden
//! weight vector `w`, and a pair is sensitive iff its score exceeds the
//! median score.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataprep::{
    binarize_ic50, zero_shot_split, BundleRecord, DatasetBundle, ImportanceVector, ResponseRecord, Split, SplitConfig,
    DEFAULT_IC50_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::graph::{EdgeType, GeneGraph};
use crate::model::FEATURE_DIM;
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub nodes: usize,
    /// Directed typed edges; defaults to twice the node count.
    pub edges: Option<usize>,
    pub samples: usize,
    /// Most targets a drug can have; defaults to a tenth of the nodes.
    pub max_targets: Option<usize>,
    pub mutation_rate: f64,
    pub seed: u64,
    pub split: SplitConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nodes: 50,
            edges: None,
            samples: 200,
            max_targets: None,
            mutation_rate: 0.1,
            seed: 0,
            split: SplitConfig::default(),
        }
    }
}

impl SynthConfig {
    /// `(drugs, cells)`: about two drugs per cell line, enough pairs for `samples`.
    pub fn grid(&self) -> (usize, usize) {
        let drugs = ((2.0 * self.samples as f64).sqrt().ceil() as usize).max(2);
        let cells = self.samples.div_ceil(drugs).max(2);
        (drugs, cells)
    }
}

/// Generated data plus the hidden rule that labelled it.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub bundle: DatasetBundle,
    pub hidden_w: [f64; FEATURE_DIM],
    pub median_score: f64,
}

fn random_graph(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<GeneGraph> {
    let ids: Vec<String> = (0..n).map(|i| format!("G{i:04}")).collect();
    let capacity = n * (n - 1) * EdgeType::ALL.len();
    if m > capacity {
        return Err(Error::InvalidValue(format!("{m} edges do not fit in {n} nodes")));
    }
    let mut seen = BTreeSet::new();
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let s = rng.random_range(0..n);
        let d = rng.random_range(0..n);
        let kind = *EdgeType::ALL.choose(rng).expect("non-empty");
        if s != d && seen.insert((s, kind, d)) {
            edges.push((ids[s].clone(), kind.name().to_string(), ids[d].clone()));
        }
    }
    GeneGraph::build(&ids, &edges)
}

fn random_features(n: usize, mutation: &Bernoulli, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(n, FEATURE_DIM);
    for i in 0..n {
        t.set(i, 0, rng.sample::<f64, _>(StandardNormal));
        t.set(i, 1, rng.sample::<f64, _>(StandardNormal));
        t.set(i, 2, if mutation.sample(rng) { 1.0 } else { 0.0 });
        t.set(i, 3, rng.sample::<f64, _>(StandardNormal));
    }
    t
}

fn random_targets(n: usize, max_targets: usize, rng: &mut ChaCha8Rng) -> ImportanceVector {
    let k = rng.random_range(1..=max_targets.clamp(1, n));
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let mut v = vec![0.0; n];
    for &i in &nodes[..k] {
        v[i] = rng.random_range(0.5..=1.0);
    }
    ImportanceVector(v)
}

/// Planted score of one pair.
pub fn planted_score(importance: &[f64], features: &Tensor, w: &[f64; FEATURE_DIM]) -> f64 {
    importance
        .iter()
        .enumerate()
        .map(|(i, &imp)| imp * features.row_slice(i).iter().zip(w).map(|(x, w)| x * w).sum::<f64>())
        .sum()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.nodes < 2 {
        return Err(Error::GraphTooSmall(cfg.nodes));
    }
    if cfg.samples < 4 {
        return Err(Error::InvalidValue(format!(
            "samples = {} (need at least 4)",
            cfg.samples
        )));
    }
    let mutation = Bernoulli::new(cfg.mutation_rate)
        .map_err(|_| Error::InvalidValue(format!("mutation_rate = {}", cfg.mutation_rate)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.nodes;
    let graph = Arc::new(random_graph(n, cfg.edges.unwrap_or(2 * n), &mut rng)?);

    let (n_drugs, n_cells) = cfg.grid();
    let max_targets = cfg.max_targets.unwrap_or((n / 10).max(1));
    let drugs: Vec<String> = (0..n_drugs).map(|i| format!("D{i:03}")).collect();
    let cells: Vec<String> = (0..n_cells).map(|i| format!("C{i:03}")).collect();
    let importance: Vec<Arc<ImportanceVector>> = (0..n_drugs)
        .map(|_| Arc::new(random_targets(n, max_targets, &mut rng)))
        .collect();
    let features: Vec<Arc<Tensor>> = (0..n_cells)
        .map(|_| Arc::new(random_features(n, &mutation, &mut rng)))
        .collect();
    let w: [f64; FEATURE_DIM] = std::array::from_fn(|_| rng.sample(StandardNormal));

    // scores use the stored f32 precision so labels agree with the files
    let rounded = |v: f64| v as f32 as f64;
    let mut pairs: Vec<(usize, usize)> = (0..n_drugs).flat_map(|d| (0..n_cells).map(move |c| (d, c))).collect();
    pairs.shuffle(&mut rng);
    pairs.truncate(cfg.samples);
    let scores: Vec<f64> = pairs
        .iter()
        .map(|&(d, c)| {
            let imp: Vec<f64> = importance[d].iter().map(|&x| rounded(x)).collect();
            planted_score(&imp, &features[c].map(rounded), &w)
        })
        .collect();
    let med = median(&scores);
    let spread = scores.iter().map(|s| (s - med).abs()).sum::<f64>() / scores.len() as f64;
    let scale = if spread > 0.0 { 1.0 / spread } else { 1.0 };

    let mut responses = Vec::with_capacity(pairs.len());
    for (&(d, c), &s) in pairs.iter().zip(&scores) {
        let planted = u8::from(s > med);
        let log_ic50 = DEFAULT_IC50_THRESHOLD - (s - med) * scale;
        let label = binarize_ic50(log_ic50, DEFAULT_IC50_THRESHOLD)?;
        if label != planted {
            // score within rounding of the median; nudge to the planted side
            let log_ic50 = if planted == 1 {
                DEFAULT_IC50_THRESHOLD - 1e-9
            } else {
                DEFAULT_IC50_THRESHOLD
            };
            responses.push(response(&drugs[d], &cells[c], log_ic50, planted));
        } else {
            responses.push(response(&drugs[d], &cells[c], log_ic50, label));
        }
    }

    let plan = zero_shot_split(
        &responses,
        &SplitConfig {
            seed: cfg.seed,
            ..cfg.split
        },
    )?;
    let by_pair: std::collections::HashMap<(&str, &str), &ResponseRecord> = responses
        .iter()
        .map(|r| ((r.drug_id.as_str(), r.cell_id.as_str()), r))
        .collect();
    let index = |ids: &[String], id: &str| ids.iter().position(|x| x == id).expect("generated id");
    let mut records = Vec::new();
    for (split, list) in [
        (Split::Train, &plan.train_pairs),
        (Split::Val, &plan.val_pairs),
        (Split::Test, &plan.test_pairs),
    ] {
        for (d, c) in list {
            let r = by_pair[&(d.as_str(), c.as_str())];
            records.push(BundleRecord {
                drug: index(&drugs, d),
                cell: index(&cells, c),
                split,
                label: r.label,
                log_ic50: r.log_ic50,
            });
        }
    }

    let bundle = DatasetBundle {
        generator: "synth".into(),
        split_config: SplitConfig {
            seed: cfg.seed,
            ..cfg.split
        },
        ic50_threshold: DEFAULT_IC50_THRESHOLD,
        graph,
        drugs,
        cells,
        features,
        importance,
        records,
        responses_read: responses.len(),
        responses_dropped: 0,
        pairs_discarded: plan.discarded,
    }
    .round_to_f32();
    Ok(SynthDataset {
        bundle,
        hidden_w: w,
        median_score: med,
    })
}

fn response(drug: &str, cell: &str, log_ic50: f64, label: u8) -> ResponseRecord {
    ResponseRecord {
        drug_id: drug.to_owned(),
        cell_id: cell.to_owned(),
        log_ic50,
        label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_balance() {
        let d = generate(&SynthConfig {
            seed: 7,
            ..SynthConfig::default()
        })
        .unwrap();
        let b = &d.bundle;
        assert_eq!(b.graph.node_count(), 50);
        assert_eq!(b.graph.edge_count(), 100);
        assert_eq!((b.drugs.len(), b.cells.len()), (20, 10));
        assert_eq!(b.responses_read, 200);
        let pos = b.records.iter().filter(|r| r.label == 1).count();
        assert!(pos > 0 && pos < b.records.len());
    }

    #[test]
    fn labels_follow_planted_rule() {
        let d = generate(&SynthConfig {
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let b = &d.bundle;
        for r in &b.records {
            let s = planted_score(&b.importance[r.drug], &b.features[r.cell], &d.hidden_w);
            assert_eq!(r.label, u8::from(s > d.median_score));
            assert_eq!(r.label, binarize_ic50(r.log_ic50, DEFAULT_IC50_THRESHOLD).unwrap());
        }
    }

    #[test]
    fn importance_range() {
        let d = generate(&SynthConfig {
            seed: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        for v in &d.bundle.importance {
            assert!(v.iter().all(|&x| x == 0.0 || (0.5..=1.0).contains(&x)));
            assert!(v.nonzero_count() >= 1);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            seed: 11,
            ..SynthConfig::default()
        };
        let (a, b) = (generate(&cfg).unwrap(), generate(&cfg).unwrap());
        assert_eq!(a.bundle.records, b.bundle.records);
        assert_eq!(a.hidden_w, b.hidden_w);
    }
}
