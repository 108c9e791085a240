use std::collections::HashMap;
use std::sync::Arc;

use super::dti::ImportanceVector;
use crate::error::{Error, Result};
use crate::graph::GeneGraph;
use crate::nn::Tensor;

/// Model input for one `(drug, cell)` pair.
///
/// Features are shared between samples of the same cell line and importance
/// vectors between samples of the same drug.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTensor {
    pub drug_id: String,
    pub cell_id: String,
    pub features: Arc<Tensor>,
    pub importance: Arc<ImportanceVector>,
    pub label: u8,
}

impl SampleTensor {
    pub fn node_count(&self) -> usize {
        self.features.rows()
    }
}

/// Samples evaluated against one shared graph.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Arc<GeneGraph>,
    pub samples: Vec<SampleTensor>,
}

impl Dataset {
    pub fn new(graph: Arc<GeneGraph>, samples: Vec<SampleTensor>) -> Result<Self> {
        for s in &samples {
            check_dims(&graph, &s.features, &s.importance)?;
        }
        Ok(Dataset { graph, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

fn check_dims(graph: &GeneGraph, x: &Tensor, imp: &ImportanceVector) -> Result<()> {
    let n = graph.node_count();
    if x.rows() != n || x.cols() != 4 {
        return Err(Error::dims(
            "sample features",
            format!("[{n}, 4]"),
            format!("{:?}", x.shape()),
        ));
    }
    if imp.len() != n {
        return Err(Error::dims("sample importance", n, imp.len()));
    }
    Ok(())
}

pub fn assemble_sample(
    graph: &GeneGraph,
    drug_id: &str,
    cell_id: &str,
    features: &HashMap<String, Arc<Tensor>>,
    dti_scores: &HashMap<String, Arc<ImportanceVector>>,
    label: u8,
) -> Result<SampleTensor> {
    let x = features
        .get(cell_id)
        .ok_or_else(|| Error::UnknownCellLine(cell_id.to_owned()))?;
    let imp = dti_scores
        .get(drug_id)
        .ok_or_else(|| Error::UnknownDrug(drug_id.to_owned()))?;
    if label > 1 {
        return Err(Error::InvalidValue(format!("label {label} is not 0/1")));
    }
    check_dims(graph, x, imp)?;
    Ok(SampleTensor {
        drug_id: drug_id.to_owned(),
        cell_id: cell_id.to_owned(),
        features: Arc::clone(x),
        importance: Arc::clone(imp),
        label,
    })
}
