use std::collections::{BTreeSet, HashMap};

use super::dti::DtiRecord;
use super::omics::OmicsSet;
use crate::error::{Error, Result};
use crate::graph::GeneGraph;

/// Selection criteria per gene, rows in graph node order.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneStats {
    pub gene_ids: Vec<String>,
    /// Unbiased variance across cell lines per source `[exp, met, mut, cnv]`;
    /// `None` when the gene is absent from the source or has < 2 values.
    pub variance: Vec<[Option<f64>; 4]>,
    pub centrality: Vec<f64>,
    pub dti_freq: Vec<usize>,
}

impl GeneStats {
    pub fn len(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gene_ids.is_empty()
    }
}

/// Unbiased sample variance of the non-missing entries.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    let present: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if present.len() < 2 {
        return None;
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    Some(present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
}

pub fn compute_gene_stats(omics: &OmicsSet, g: &GeneGraph, dti: &[DtiRecord]) -> Result<GeneStats> {
    for m in omics.sources() {
        if m.n_cells() < 2 {
            return Err(Error::TooFewCellLines(m.n_cells()));
        }
    }
    let centrality = g.degree_centrality()?;
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for r in dti {
        *freq.entry(r.gene_id.as_str()).or_default() += 1;
    }
    let sources = omics.sources();
    let variance = g
        .node_ids()
        .iter()
        .map(|gene| {
            let mut row = [None; 4];
            for (slot, m) in row.iter_mut().zip(sources) {
                *slot = m.gene_index(gene).and_then(|i| sample_variance(m.row(i)));
            }
            row
        })
        .collect();
    Ok(GeneStats {
        gene_ids: g.node_ids().to_vec(),
        variance,
        centrality,
        dti_freq: g
            .node_ids()
            .iter()
            .map(|id| freq.get(id.as_str()).copied().unwrap_or(0))
            .collect(),
    })
}

fn top_k(mut scored: Vec<(f64, &str)>, k: usize) -> impl Iterator<Item = &str> {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id)
}

/// Union of the top-`k` genes by each source variance, by centrality and by
/// DTI frequency. Ties go to the lexicographically smaller gene id.
pub fn select_genes(stats: &GeneStats, k: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for s in 0..4 {
        let scored = stats
            .gene_ids
            .iter()
            .zip(&stats.variance)
            .filter_map(|(id, v)| v[s].map(|v| (v, id.as_str())))
            .collect();
        out.extend(top_k(scored, k).map(str::to_owned));
    }
    let by_centrality = stats
        .gene_ids
        .iter()
        .zip(&stats.centrality)
        .map(|(id, &c)| (c, id.as_str()))
        .collect();
    out.extend(top_k(by_centrality, k).map(str::to_owned));
    let by_freq = stats
        .gene_ids
        .iter()
        .zip(&stats.dti_freq)
        .map(|(id, &f)| (f as f64, id.as_str()))
        .collect();
    out.extend(top_k(by_freq, k).map(str::to_owned));
    out
}
