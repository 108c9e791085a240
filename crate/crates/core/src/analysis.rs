//! How propagation reshapes importance, and per-pair explanation export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataprep::SampleTensor;
use crate::error::{Error, Result};
use crate::graph::GeneGraph;
use crate::io::write_json;
use crate::model::Prediction;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // sqrt of a product keeps cosine(v, v) at exactly 1
    Ok((dot / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ascending ranks; tied values share their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    same_len(a, b)?;
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    same_len(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub cosine: f64,
    /// `None` if either vector is constant.
    pub spearman_all: Option<f64>,
    /// Over the indices where `before` is nonzero.
    pub spearman_nonzero: Option<f64>,
}

pub fn compare_importance(before: &[f64], after: &[f64]) -> Result<Similarity> {
    same_len(before, after)?;
    if before.len() < 2 {
        return Err(Error::InvalidValue(format!(
            "need at least 2 entries, got {}",
            before.len()
        )));
    }
    let cosine = cosine(before, after)?;
    let (b, a): (Vec<f64>, Vec<f64>) = before
        .iter()
        .zip(after)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, a)| (*b, *a))
        .unzip();
    if b.len() < 2 {
        return Err(Error::TooFewNonzero(b.len()));
    }
    Ok(Similarity {
        cosine,
        spearman_all: spearman(before, after)?,
        spearman_nonzero: spearman(&b, &a)?,
    })
}

/// 1-based positions by descending value, ties to the lower index.
pub fn descending_ranks(v: &[f64]) -> Vec<usize> {
    let mut ranks = vec![0; v.len()];
    for (pos, i) in top_order(v).into_iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Indices sorted by descending value, ties to the lower index.
pub fn top_order(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankShift {
    pub pct_rank_changed: f64,
    pub avg_abs_shift: f64,
    /// Largest upward move (positive = towards rank 1).
    pub max_up: i64,
    pub max_down: i64,
}

/// `shift_i = rank_before(i) − rank_after(i)`.
pub fn rank_shift_stats(before: &[f64], after: &[f64]) -> Result<RankShift> {
    same_len(before, after)?;
    if before.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (rb, ra) = (descending_ranks(before), descending_ranks(after));
    let shifts: Vec<i64> = rb.iter().zip(&ra).map(|(&b, &a)| b as i64 - a as i64).collect();
    let n = shifts.len() as f64;
    Ok(RankShift {
        pct_rank_changed: 100.0 * shifts.iter().filter(|&&s| s != 0).count() as f64 / n,
        avg_abs_shift: shifts.iter().map(|s| s.unsigned_abs() as f64).sum::<f64>() / n,
        max_up: shifts.iter().copied().max().unwrap_or(0).max(0),
        max_down: shifts.iter().copied().min().unwrap_or(0).min(0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub density_before: f64,
    pub density_after: f64,
    pub mean_interactions_before: f64,
    pub mean_interactions_after: f64,
}

/// Nonzero fractions pooled over all vectors, and mean nonzero counts per vector.
pub fn density_stats<B: AsRef<[f64]>, A: AsRef<[f64]>>(pairs: &[(B, A)]) -> Result<Density> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut nz_b, mut nz_a, mut len_b, mut len_a) = (0usize, 0usize, 0usize, 0usize);
    for (b, a) in pairs {
        let (b, a) = (b.as_ref(), a.as_ref());
        nz_b += b.iter().filter(|&&x| x != 0.0).count();
        nz_a += a.iter().filter(|&&x| x != 0.0).count();
        len_b += b.len();
        len_a += a.len();
    }
    let frac = |nz: usize, len: usize| if len == 0 { 0.0 } else { nz as f64 / len as f64 };
    let k = pairs.len() as f64;
    Ok(Density {
        density_before: frac(nz_b, len_b),
        density_after: frac(nz_a, len_a),
        mean_interactions_before: nz_b as f64 / k,
        mean_interactions_after: nz_a as f64 / k,
    })
}

/// Aggregate over many `(before, after)` pairs. Similarity and rank fields
/// are means of per-pair values; `max_up`/`max_down` are the extremes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationStats {
    pub pairs: usize,
    /// Pairs left out of `cosine` because a vector was all zeros.
    pub zero_vector_pairs: usize,
    pub cosine: Option<f64>,
    pub spearman_all: Option<f64>,
    pub spearman_nonzero: Option<f64>,
    pub pct_rank_changed: f64,
    pub avg_abs_shift: f64,
    pub max_up: i64,
    pub max_down: i64,
    pub density_before: f64,
    pub density_after: f64,
    pub mean_interactions_before: f64,
    pub mean_interactions_after: f64,
}

fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn propagation_stats<B: AsRef<[f64]>, A: AsRef<[f64]>>(pairs: &[(B, A)]) -> Result<PropagationStats> {
    let density = density_stats(pairs)?;
    let (mut cos, mut sp_all, mut sp_nz) = (Vec::new(), Vec::new(), Vec::new());
    let (mut pct, mut avg) = (0.0, 0.0);
    let (mut up, mut down) = (0i64, 0i64);
    let mut zero_pairs = 0;
    for (b, a) in pairs {
        let (b, a) = (b.as_ref(), a.as_ref());
        let rs = rank_shift_stats(b, a)?;
        pct += rs.pct_rank_changed;
        avg += rs.avg_abs_shift;
        up = up.max(rs.max_up);
        down = down.min(rs.max_down);
        match cosine(b, a) {
            Ok(c) => cos.push(c),
            Err(Error::ZeroVector) => zero_pairs += 1,
            Err(e) => return Err(e),
        }
        if let Some(s) = spearman(b, a)? {
            sp_all.push(s);
        }
        let (bn, an): (Vec<f64>, Vec<f64>) = b
            .iter()
            .zip(a)
            .filter(|(x, _)| **x != 0.0)
            .map(|(x, y)| (*x, *y))
            .unzip();
        if bn.len() >= 2 {
            if let Some(s) = spearman(&bn, &an)? {
                sp_nz.push(s);
            }
        }
    }
    let k = pairs.len() as f64;
    Ok(PropagationStats {
        pairs: pairs.len(),
        zero_vector_pairs: zero_pairs,
        cosine: mean_of(&cos),
        spearman_all: mean_of(&sp_all),
        spearman_nonzero: mean_of(&sp_nz),
        pct_rank_changed: pct / k,
        avg_abs_shift: avg / k,
        max_up: up,
        max_down: down,
        density_before: density.density_before,
        density_after: density.density_after,
        mean_interactions_before: density.mean_interactions_before,
        mean_interactions_after: density.mean_interactions_after,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneRow {
    pub rank: usize,
    pub gene: String,
    pub node: usize,
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub is_known_target: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEdge {
    pub src: String,
    pub dst: String,
    #[serde(rename = "type")]
    pub kind: String,
}

/// Top-`k` genes of one prediction and the subgraph they induce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub drug: String,
    pub cell: String,
    pub prob: f64,
    pub label: u8,
    pub genes: Vec<GeneRow>,
    pub edges: Vec<ExplanationEdge>,
}

pub fn export_explanation(sample: &SampleTensor, pred: &Prediction, g: &GeneGraph, k: usize) -> Result<Explanation> {
    if k == 0 {
        return Err(Error::InvalidValue("k must be at least 1".into()));
    }
    let n = g.node_count();
    let fin = &pred.final_importance;
    if fin.len() != n {
        return Err(Error::dims("final importance", n, fin.len()));
    }
    if sample.importance.len() != n {
        return Err(Error::dims("initial importance", n, sample.importance.len()));
    }
    let top: Vec<usize> = top_order(fin).into_iter().take(k).collect();
    let genes = top
        .iter()
        .enumerate()
        .map(|(r, &i)| GeneRow {
            rank: r + 1,
            gene: g.node_ids()[i].clone(),
            node: i,
            initial: sample.importance[i],
            final_score: fin[i],
            is_known_target: sample.importance[i] > 0.0,
        })
        .collect();
    let keep: BTreeSet<usize> = top.iter().copied().collect();
    let sub = g.induced_subgraph(&keep)?;
    let edges = sub
        .typed_edges()
        .into_iter()
        .map(|(src, kind, dst)| ExplanationEdge { src, dst, kind })
        .collect();
    Ok(Explanation {
        drug: sample.drug_id.clone(),
        cell: sample.cell_id.clone(),
        prob: pred.prob,
        label: pred.label,
        genes,
        edges,
    })
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl Explanation {
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.drug, self.cell)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {} {{", dot_id(&self.file_stem()));
        for r in &self.genes {
            let _ = writeln!(
                out,
                "  {} [label={}, rank={}, initial={}, final={}, is_known_target={}];",
                dot_id(&r.gene),
                dot_id(&r.gene),
                r.rank,
                r.initial,
                r.final_score,
                r.is_known_target
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  {} -> {} [type={}];",
                dot_id(&e.src),
                dot_id(&e.dst),
                dot_id(&e.kind)
            );
        }
        out.push_str("}\n");
        out
    }

    /// Writes `<drug>_<cell>.json` and `.dot` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = self.file_stem();
        write_json(&dir.join(format!("{stem}.json")), self)?;
        let dot = dir.join(format!("{stem}.dot"));
        std::fs::write(&dot, self.to_dot()).map_err(|e| Error::io(&dot, e))
    }
}
