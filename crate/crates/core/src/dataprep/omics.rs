use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_tsv_rows;
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmicsSource {
    Exp,
    Met,
    Mut,
    Cnv,
}

impl OmicsSource {
    pub const ALL: [OmicsSource; 4] = [OmicsSource::Exp, OmicsSource::Met, OmicsSource::Mut, OmicsSource::Cnv];

    pub fn name(self) -> &'static str {
        match self {
            OmicsSource::Exp => "exp",
            OmicsSource::Met => "met",
            OmicsSource::Mut => "mut",
            OmicsSource::Cnv => "cnv",
        }
    }
}

impl fmt::Display for OmicsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Genes × cell lines matrix for one omics source.
///
/// Missing entries are stored as NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct OmicsMatrix {
    source: OmicsSource,
    gene_ids: Vec<String>,
    cell_ids: Vec<String>,
    values: Vec<f64>,
    gene_index: HashMap<String, usize>,
    cell_index: HashMap<String, usize>,
}

fn index_of(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::InvalidValue(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(map)
}

impl OmicsMatrix {
    pub fn new(source: OmicsSource, gene_ids: Vec<String>, cell_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != gene_ids.len() * cell_ids.len() {
            return Err(Error::dims(
                format!("{source} matrix"),
                format!("{}x{}", gene_ids.len(), cell_ids.len()),
                values.len(),
            ));
        }
        for &v in &values {
            if v.is_nan() {
                continue;
            }
            if !v.is_finite() {
                return Err(Error::NonFiniteInput(v));
            }
            match source {
                OmicsSource::Mut if v != 0.0 && v != 1.0 => {
                    return Err(Error::InvalidValue(format!("mutation value {v} is not 0/1")));
                }
                OmicsSource::Exp if v < 0.0 => {
                    return Err(Error::NegativeInput {
                        what: "expression matrix".into(),
                        value: v,
                    });
                }
                _ => {}
            }
        }
        Ok(OmicsMatrix {
            gene_index: index_of(&gene_ids, "gene")?,
            cell_index: index_of(&cell_ids, "cell line")?,
            source,
            gene_ids,
            cell_ids,
            values,
        })
    }

    /// Reads `gene<TAB>cell...` with a header row. `NA` or empty cells are missing.
    pub fn from_tsv(source: OmicsSource, path: &Path) -> Result<Self> {
        let rows = read_tsv_rows(path)?;
        let mut it = rows.into_iter();
        let (_, header) = it.next().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing header".into(),
        })?;
        let cell_ids: Vec<String> = header.into_iter().skip(1).collect();
        let mut gene_ids = Vec::new();
        let mut values = Vec::new();
        for (line, fields) in it {
            if fields.len() != cell_ids.len() + 1 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected {} fields, found {}", cell_ids.len() + 1, fields.len()),
                });
            }
            let mut fields = fields.into_iter();
            gene_ids.push(fields.next().unwrap());
            for f in fields {
                let v = if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
                    f64::NAN
                } else {
                    f.parse::<f64>().map_err(|e| Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: format!("`{f}`: {e}"),
                    })?
                };
                values.push(v);
            }
        }
        OmicsMatrix::new(source, gene_ids, cell_ids, values)
    }

    pub fn source(&self) -> OmicsSource {
        self.source
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn gene_index(&self, gene: &str) -> Option<usize> {
        self.gene_index.get(gene).copied()
    }

    pub fn cell_index(&self, cell: &str) -> Option<usize> {
        self.cell_index.get(cell).copied()
    }

    #[inline]
    pub fn value(&self, gene: usize, cell: usize) -> f64 {
        self.values[gene * self.cell_ids.len() + cell]
    }

    pub fn row(&self, gene: usize) -> &[f64] {
        let c = self.cell_ids.len();
        &self.values[gene * c..(gene + 1) * c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn with_values(&self, values: Vec<f64>) -> OmicsMatrix {
        OmicsMatrix { values, ..self.clone() }
    }

    /// Entry for `(gene, cell)` by id, `None` when either is absent or missing.
    pub fn lookup(&self, gene: &str, cell: &str) -> Option<f64> {
        let (g, c) = (self.gene_index(gene)?, self.cell_index(cell)?);
        let v = self.value(g, c);
        (!v.is_nan()).then_some(v)
    }
}

/// The four omics sources that make up node features.
#[derive(Clone, Debug)]
pub struct OmicsSet {
    pub exp: OmicsMatrix,
    pub met: OmicsMatrix,
    pub mutation: OmicsMatrix,
    pub cnv: OmicsMatrix,
}

impl OmicsSet {
    pub fn sources(&self) -> [&OmicsMatrix; 4] {
        [&self.exp, &self.met, &self.mutation, &self.cnv]
    }
}

/// Column-wise transcripts-per-million scaling.
pub fn tpm(raw: &OmicsMatrix) -> Result<OmicsMatrix> {
    let (g, c) = (raw.n_genes(), raw.n_cells());
    let mut sums = vec![0.0; c];
    for gi in 0..g {
        for (ci, s) in sums.iter_mut().enumerate() {
            let v = raw.value(gi, ci);
            if v.is_nan() {
                continue;
            }
            if v < 0.0 {
                return Err(Error::NegativeInput {
                    what: format!("expression {}/{}", raw.gene_ids[gi], raw.cell_ids[ci]),
                    value: v,
                });
            }
            *s += v;
        }
    }
    if let Some(ci) = sums.iter().position(|&s| s <= 0.0) {
        return Err(Error::ZeroColumnSum(raw.cell_ids[ci].clone()));
    }
    let values = raw
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| v / sums[i % c] * 1e6)
        .collect();
    Ok(raw.with_values(values))
}

pub fn log2_plus_one(m: &OmicsMatrix) -> OmicsMatrix {
    m.with_values(m.values.iter().map(|&v| (v + 1.0).log2()).collect())
}

/// Percentile `q` in `[0, 100]` of sorted data, interpolating linearly
/// between the two closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Clips every entry to the global `[lo_q, hi_q]` percentile bounds.
pub fn winsorize(m: &OmicsMatrix, lo_q: f64, hi_q: f64) -> OmicsMatrix {
    let mut present: Vec<f64> = m.values.iter().copied().filter(|v| !v.is_nan()).collect();
    if present.is_empty() {
        return m.clone();
    }
    present.sort_by(f64::total_cmp);
    let lo = percentile(&present, lo_q);
    let hi = percentile(&present, hi_q);
    m.with_values(
        m.values
            .iter()
            .map(|&v| if v.is_nan() { v } else { v.clamp(lo, hi) })
            .collect(),
    )
}

/// TPM, then `log2(x + 1)`, then winsorisation at the 0.1/99.9 percentiles.
pub fn preprocess_expression(raw: &OmicsMatrix) -> Result<OmicsMatrix> {
    Ok(winsorize(&log2_plus_one(&tpm(raw)?), 0.1, 99.9))
}

/// `|V| × 4` feature matrix `[exp, met, mut, cnv]` for one cell line.
///
/// Genes missing from a source get 0 in that column.
pub fn assemble_node_features(omics: &OmicsSet, gene_order: &[String], cell_id: &str) -> Result<Tensor> {
    let sources = omics.sources();
    let cols: Vec<usize> = sources
        .iter()
        .map(|m| {
            m.cell_index(cell_id)
                .ok_or_else(|| Error::UnknownCellLine(cell_id.to_owned()))
        })
        .collect::<Result<_>>()?;
    let mut out = Tensor::zeros(gene_order.len(), 4);
    for (r, gene) in gene_order.iter().enumerate() {
        for (k, (m, &c)) in sources.iter().zip(&cols).enumerate() {
            if let Some(g) = m.gene_index(gene) {
                let v = m.value(g, c);
                if !v.is_nan() {
                    out.set(r, k, v);
                }
            }
        }
    }
    Ok(out)
}
