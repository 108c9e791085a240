use std::collections::HashMap;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_tsv_rows;

/// Literature and database evidence linking a drug to a gene.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtiRecord {
    pub drug_id: String,
    pub gene_id: String,
    pub pubmed_count: u64,
    pub in_database: bool,
}

/// Per-node importance scores in graph node order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImportanceVector(pub Vec<f64>);

impl Deref for ImportanceVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ImportanceVector {
    fn from(v: Vec<f64>) -> Self {
        ImportanceVector(v)
    }
}

impl ImportanceVector {
    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Reads `drug_id<TAB>gene_id<TAB>pubmed_count<TAB>in_database(0/1)`.
pub fn read_dti(path: &Path) -> Result<Vec<DtiRecord>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (line, f) in read_tsv_rows(path)? {
        if f.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", f.len())));
        }
        let pubmed_count = f[2]
            .parse::<u64>()
            .map_err(|e| parse_err(line, format!("pubmed_count `{}`: {e}", f[2])))?;
        let in_database = match f[3].as_str() {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("in_database `{other}` is not 0/1"))),
        };
        if pubmed_count > 0 && !in_database {
            return Err(parse_err(line, "pubmed_count > 0 requires in_database = 1".into()));
        }
        out.push(DtiRecord {
            drug_id: f[0].clone(),
            gene_id: f[1].clone(),
            pubmed_count,
            in_database,
        });
    }
    Ok(out)
}

/// Initial importance of every gene in `gene_order` for one drug.
///
/// Database-backed genes score `0.5 + 0.5 · minmax(ln(1 + count))` over the
/// drug's records; all other genes score 0. When every record shares the
/// same log-count the score is 1.0 if that count is positive, else 0.5.
/// Repeated `(drug, gene)` records keep the largest count.
pub fn compute_dti_score(records: &[DtiRecord], gene_order: &[String]) -> Result<ImportanceVector> {
    let drug = records.first().map(|r| r.drug_id.clone()).unwrap_or_default();
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for r in records.iter().filter(|r| r.in_database) {
        let c = counts.entry(r.gene_id.as_str()).or_insert(0);
        *c = (*c).max(r.pubmed_count);
    }
    if counts.is_empty() {
        return Err(Error::EmptyRecordSet(drug));
    }
    let log_count = |c: u64| (c as f64).ln_1p();
    let min = counts.values().map(|&c| log_count(c)).fold(f64::INFINITY, f64::min);
    let max = counts.values().map(|&c| log_count(c)).fold(f64::NEG_INFINITY, f64::max);
    let degenerate = if max > 0.0 { 1.0 } else { 0.5 };
    let scores = gene_order
        .iter()
        .map(|g| match counts.get(g.as_str()) {
            None => 0.0,
            Some(_) if max == min => degenerate,
            Some(&c) => 0.5 + 0.5 * (log_count(c) - min) / (max - min),
        })
        .collect();
    Ok(ImportanceVector(scores))
}

/// Groups records by drug, preserving first-appearance order.
pub fn group_by_drug(records: &[DtiRecord]) -> Vec<(String, Vec<DtiRecord>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<DtiRecord>> = HashMap::new();
    for r in records {
        groups
            .entry(r.drug_id.clone())
            .or_insert_with(|| {
                order.push(r.drug_id.clone());
                Vec::new()
            })
            .push(r.clone());
    }
    order
        .into_iter()
        .map(|d| {
            let g = groups.remove(&d).unwrap_or_default();
            (d, g)
        })
        .collect()
}
