//! On-disk dataset bundle: JSON manifest plus node/edge lists, a sample
//! table and binary tensor files.
//!
//! ```text
//! manifest.json    format, counts, seed, fractions, threshold, sha256 per file
//! nodes.txt        gene ids in node order
//! edges.tsv        src<TAB>type<TAB>dst
//! drugs.txt        drug ids, row order of importance.f32
//! cells.txt        cell ids, row order of features.f32
//! features.f32     [cells, nodes, 4]
//! importance.f32   [drugs, nodes]
//! samples.tsv      drug_id<TAB>cell_id<TAB>split<TAB>label<TAB>log_ic50 (header row)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dti::{compute_dti_score, group_by_drug, read_dti, ImportanceVector};
use super::omics::{assemble_node_features, preprocess_expression, OmicsMatrix, OmicsSet, OmicsSource};
use super::sample::{Dataset, SampleTensor};
use super::select::{compute_gene_stats, select_genes};
use super::split::{read_responses, zero_shot_split, SplitConfig, DEFAULT_IC50_THRESHOLD};
use crate::error::{Error, Result};
use crate::graph::GeneGraph;
use crate::io::{decode_f32_tensor, encode_f32_tensor, read_bytes, read_json, sha256_hex, write_bytes, write_json};
use crate::nn::Tensor;

pub const BUNDLE_FORMAT: &str = "graphpine-dataset";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidValue(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleCounts {
    pub nodes: usize,
    pub edges: usize,
    pub drugs: usize,
    pub cells: usize,
    pub samples: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Input rows before filtering (prep only).
    pub responses_read: usize,
    /// Responses whose drug has no usable DTI record or whose cell line lacks omics data.
    pub responses_dropped: usize,
    /// Pairs mixing a seen and an unseen entity.
    pub pairs_discarded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub created_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub generator: String,
    pub seed: u64,
    pub cell_frac: f64,
    pub drug_frac: f64,
    pub val_frac: f64,
    pub ic50_threshold: f64,
    pub counts: BundleCounts,
    pub files: BTreeMap<String, String>,
    /// Excluded from reproducibility comparisons.
    pub metadata: BundleMetadata,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BundleRecord {
    pub drug: usize,
    pub cell: usize,
    pub split: Split,
    pub label: u8,
    pub log_ic50: f64,
}

/// In-memory form of a dataset bundle.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub generator: String,
    pub split_config: SplitConfig,
    pub ic50_threshold: f64,
    pub graph: Arc<GeneGraph>,
    pub drugs: Vec<String>,
    pub cells: Vec<String>,
    pub features: Vec<Arc<Tensor>>,
    pub importance: Vec<Arc<ImportanceVector>>,
    pub records: Vec<BundleRecord>,
    /// Filtering statistics carried into the manifest.
    pub responses_read: usize,
    pub responses_dropped: usize,
    pub pairs_discarded: usize,
}

const FILES: [&str; 7] = [
    "nodes.txt",
    "edges.tsv",
    "drugs.txt",
    "cells.txt",
    "features.f32",
    "importance.f32",
    "samples.tsv",
];

impl DatasetBundle {
    /// Rounds features and importance to the f32 precision used on disk, so
    /// an in-memory bundle behaves exactly like one read back by [`load`](Self::load).
    pub fn round_to_f32(mut self) -> Self {
        let r = |v: f64| v as f32 as f64;
        self.features = self.features.iter().map(|t| Arc::new(t.map(r))).collect();
        self.importance = self
            .importance
            .iter()
            .map(|v| Arc::new(ImportanceVector(v.iter().map(|&x| r(x)).collect())))
            .collect();
        self
    }

    pub fn counts(&self) -> BundleCounts {
        let in_split = |s: Split| self.records.iter().filter(|r| r.split == s).count();
        let positives = self.records.iter().filter(|r| r.label == 1).count();
        BundleCounts {
            nodes: self.graph.node_count(),
            edges: self.graph.edge_count(),
            drugs: self.drugs.len(),
            cells: self.cells.len(),
            samples: self.records.len(),
            train: in_split(Split::Train),
            val: in_split(Split::Val),
            test: in_split(Split::Test),
            positives,
            negatives: self.records.len() - positives,
            responses_read: self.responses_read,
            responses_dropped: self.responses_dropped,
            pairs_discarded: self.pairs_discarded,
        }
    }

    pub fn dataset(&self, split: Split) -> Dataset {
        let samples = self
            .records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| self.sample(r))
            .collect();
        Dataset {
            graph: Arc::clone(&self.graph),
            samples,
        }
    }

    pub fn sample(&self, r: &BundleRecord) -> SampleTensor {
        SampleTensor {
            drug_id: self.drugs[r.drug].clone(),
            cell_id: self.cells[r.cell].clone(),
            features: Arc::clone(&self.features[r.cell]),
            importance: Arc::clone(&self.importance[r.drug]),
            label: r.label,
        }
    }

    /// Looks up one pair regardless of split.
    pub fn find(&self, drug: &str, cell: &str) -> Option<SampleTensor> {
        self.records
            .iter()
            .find(|r| self.drugs[r.drug] == drug && self.cells[r.cell] == cell)
            .map(|r| self.sample(r))
    }

    fn file_bytes(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        let n = self.graph.node_count();
        let lines = |items: &[String]| {
            let mut s = String::new();
            for i in items {
                s.push_str(i);
                s.push('\n');
            }
            s.into_bytes()
        };
        let mut edges = String::new();
        for (s, t, d) in self.graph.typed_edges() {
            edges.push_str(&format!("{s}\t{t}\t{d}\n"));
        }
        let mut feat = Vec::with_capacity(self.cells.len() * n * 4);
        for f in &self.features {
            feat.extend_from_slice(f.data());
        }
        let mut imp = Vec::with_capacity(self.drugs.len() * n);
        for i in &self.importance {
            imp.extend_from_slice(i);
        }
        let mut samples = String::from("drug_id\tcell_id\tsplit\tlabel\tlog_ic50\n");
        for r in &self.records {
            samples.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                self.drugs[r.drug], self.cells[r.cell], r.split, r.label, r.log_ic50
            ));
        }
        Ok(vec![
            ("nodes.txt", lines(self.graph.node_ids())),
            ("edges.tsv", edges.into_bytes()),
            ("drugs.txt", lines(&self.drugs)),
            ("cells.txt", lines(&self.cells)),
            ("features.f32", encode_f32_tensor(&[self.cells.len(), n, 4], &feat)?),
            ("importance.f32", encode_f32_tensor(&[self.drugs.len(), n], &imp)?),
            ("samples.tsv", samples.into_bytes()),
        ])
    }

    pub fn manifest(&self, created_unix: u64) -> Result<BundleManifest> {
        Ok(self.manifest_for(&self.file_bytes()?, created_unix))
    }

    fn manifest_for(&self, file_bytes: &[(&str, Vec<u8>)], created_unix: u64) -> BundleManifest {
        BundleManifest {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            generator: self.generator.clone(),
            seed: self.split_config.seed,
            cell_frac: self.split_config.cell_frac,
            drug_frac: self.split_config.drug_frac,
            val_frac: self.split_config.val_frac,
            ic50_threshold: self.ic50_threshold,
            counts: self.counts(),
            files: file_bytes
                .iter()
                .map(|(name, bytes)| (name.to_string(), sha256_hex(bytes)))
                .collect(),
            metadata: BundleMetadata { created_unix },
        }
    }

    /// Writes the data files and `manifest.json`; `created_unix` only lands
    /// in the manifest's metadata block.
    pub fn write(&self, dir: &Path, created_unix: u64) -> Result<BundleManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let file_bytes = self.file_bytes()?;
        for (name, bytes) in &file_bytes {
            write_bytes(&dir.join(name), bytes)?;
        }
        let manifest = self.manifest_for(&file_bytes, created_unix);
        write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }

    /// Loads a bundle and checks it against its own manifest.
    pub fn load(dir: &Path) -> Result<DatasetBundle> {
        let manifest: BundleManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::CorruptManifest(format!(
                "unexpected format `{}`",
                manifest.format
            )));
        }
        if manifest.version != BUNDLE_VERSION {
            return Err(Error::VersionMismatch(format!(
                "bundle version {} (supported: {BUNDLE_VERSION})",
                manifest.version
            )));
        }
        let mut raw: HashMap<&str, Vec<u8>> = HashMap::new();
        for name in FILES {
            let path = dir.join(name);
            let bytes = read_bytes(&path)?;
            let expected = manifest
                .files
                .get(name)
                .ok_or_else(|| Error::CorruptManifest(format!("no checksum for {name}")))?;
            if &sha256_hex(&bytes) != expected {
                return Err(Error::CorruptManifest(format!("checksum mismatch for {name}")));
            }
            raw.insert(name, bytes);
        }
        let text = |name: &str| String::from_utf8_lossy(&raw[name]).into_owned();
        let lines = |name: &str| -> Vec<String> { text(name).lines().map(str::to_owned).collect() };

        let nodes = lines("nodes.txt");
        let edges: Vec<(String, String, String)> = text("edges.tsv")
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                if f.len() != 3 {
                    return Err(Error::CorruptManifest(format!("bad edge row `{l}`")));
                }
                Ok((f[0].to_owned(), f[1].to_owned(), f[2].to_owned()))
            })
            .collect::<Result<_>>()?;
        let graph = Arc::new(GeneGraph::build(&nodes, &edges)?);
        let n = graph.node_count();
        let drugs = lines("drugs.txt");
        let cells = lines("cells.txt");

        let (fshape, fdata) = decode_f32_tensor(&raw["features.f32"], "features.f32")?;
        if fshape != [cells.len(), n, 4] {
            return Err(Error::CorruptManifest(format!("features shape {fshape:?}")));
        }
        let features = fdata
            .chunks_exact(n * 4)
            .map(|c| Tensor::from_vec(n, 4, c.to_vec()).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let (ishape, idata) = decode_f32_tensor(&raw["importance.f32"], "importance.f32")?;
        if ishape != [drugs.len(), n] {
            return Err(Error::CorruptManifest(format!("importance shape {ishape:?}")));
        }
        let importance = if n == 0 {
            (0..drugs.len())
                .map(|_| Arc::new(ImportanceVector::default()))
                .collect()
        } else {
            idata
                .chunks_exact(n)
                .map(|c| Arc::new(ImportanceVector(c.to_vec())))
                .collect()
        };

        let drug_idx: HashMap<&str, usize> = drugs.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let cell_idx: HashMap<&str, usize> = cells.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut records = Vec::new();
        for line in text("samples.tsv").lines().skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::CorruptManifest(format!("bad sample row `{line}`"));
            if f.len() != 5 {
                return Err(bad());
            }
            records.push(BundleRecord {
                drug: *drug_idx.get(f[0]).ok_or_else(bad)?,
                cell: *cell_idx.get(f[1]).ok_or_else(bad)?,
                split: f[2].parse()?,
                label: f[3].parse().map_err(|_| bad())?,
                log_ic50: f[4].parse().map_err(|_| bad())?,
            });
        }

        let bundle = DatasetBundle {
            generator: manifest.generator.clone(),
            split_config: SplitConfig {
                cell_frac: manifest.cell_frac,
                drug_frac: manifest.drug_frac,
                val_frac: manifest.val_frac,
                seed: manifest.seed,
            },
            ic50_threshold: manifest.ic50_threshold,
            graph,
            drugs,
            cells,
            features,
            importance,
            records,
            responses_read: manifest.counts.responses_read,
            responses_dropped: manifest.counts.responses_dropped,
            pairs_discarded: manifest.counts.pairs_discarded,
        };
        let counts = bundle.counts();
        if counts != manifest.counts {
            return Err(Error::CorruptManifest(format!(
                "counts {counts:?} disagree with manifest {:?}",
                manifest.counts
            )));
        }
        Ok(bundle)
    }
}

/// Input file locations for [`prepare_bundle`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepInputs {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub exp: PathBuf,
    pub met: PathBuf,
    pub mutation: PathBuf,
    pub cnv: PathBuf,
    pub dti: PathBuf,
    pub responses: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    /// Genes taken per selection criterion.
    pub top_k: usize,
    pub ic50_threshold: f64,
    pub split: SplitConfig,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            top_k: 3000,
            ic50_threshold: DEFAULT_IC50_THRESHOLD,
            split: SplitConfig::default(),
        }
    }
}

/// Full preparation: gene selection, expression normalisation, DTI
/// importance, labelling and the zero-shot split.
pub fn prepare_bundle(inputs: &PrepInputs, cfg: &PrepConfig) -> Result<DatasetBundle> {
    if cfg.top_k == 0 {
        return Err(Error::InvalidValue("top_k must be at least 1".into()));
    }
    let full = GeneGraph::from_files(&inputs.nodes, &inputs.edges)?;
    let raw = OmicsSet {
        exp: OmicsMatrix::from_tsv(OmicsSource::Exp, &inputs.exp)?,
        met: OmicsMatrix::from_tsv(OmicsSource::Met, &inputs.met)?,
        mutation: OmicsMatrix::from_tsv(OmicsSource::Mut, &inputs.mutation)?,
        cnv: OmicsMatrix::from_tsv(OmicsSource::Cnv, &inputs.cnv)?,
    };
    let dti = read_dti(&inputs.dti)?;
    let responses = read_responses(&inputs.responses, cfg.ic50_threshold)?;

    let stats = compute_gene_stats(&raw, &full, &dti)?;
    let selected = select_genes(&stats, cfg.top_k);
    let keep: BTreeSet<usize> = full
        .node_ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| selected.contains(*id))
        .map(|(i, _)| i)
        .collect();
    let graph = Arc::new(full.induced_subgraph(&keep)?);

    let omics = OmicsSet {
        exp: preprocess_expression(&raw.exp)?,
        ..raw
    };

    let mut scores: HashMap<String, Arc<ImportanceVector>> = HashMap::new();
    for (drug, recs) in group_by_drug(&dti) {
        match compute_dti_score(&recs, graph.node_ids()) {
            Ok(s) => {
                scores.insert(drug, Arc::new(s));
            }
            Err(Error::EmptyRecordSet(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let has_cell = |c: &str| omics.sources().iter().all(|m| m.cell_index(c).is_some());
    let usable: Vec<_> = responses
        .iter()
        .filter(|r| scores.contains_key(&r.drug_id) && has_cell(&r.cell_id))
        .cloned()
        .collect();
    let plan = zero_shot_split(&usable, &cfg.split)?;

    let mut drugs: Vec<String> = Vec::new();
    let mut cells: Vec<String> = Vec::new();
    let mut drug_idx: HashMap<String, usize> = HashMap::new();
    let mut cell_idx: HashMap<String, usize> = HashMap::new();
    let mut features = Vec::new();
    let mut importance = Vec::new();
    let label_of: HashMap<(&str, &str), (u8, f64)> = usable
        .iter()
        .map(|r| ((r.drug_id.as_str(), r.cell_id.as_str()), (r.label, r.log_ic50)))
        .collect();

    let mut records = Vec::new();
    for (split, pairs) in [
        (Split::Train, &plan.train_pairs),
        (Split::Val, &plan.val_pairs),
        (Split::Test, &plan.test_pairs),
    ] {
        for (d, c) in pairs {
            let di = match drug_idx.get(d) {
                Some(&i) => i,
                None => {
                    drugs.push(d.clone());
                    importance.push(Arc::clone(&scores[d]));
                    drug_idx.insert(d.clone(), drugs.len() - 1);
                    drugs.len() - 1
                }
            };
            let ci = match cell_idx.get(c) {
                Some(&i) => i,
                None => {
                    cells.push(c.clone());
                    features.push(Arc::new(assemble_node_features(&omics, graph.node_ids(), c)?));
                    cell_idx.insert(c.clone(), cells.len() - 1);
                    cells.len() - 1
                }
            };
            let (label, log_ic50) = label_of[&(d.as_str(), c.as_str())];
            records.push(BundleRecord {
                drug: di,
                cell: ci,
                split,
                label,
                log_ic50,
            });
        }
    }

    Ok(DatasetBundle {
        generator: "prep".into(),
        split_config: cfg.split,
        ic50_threshold: cfg.ic50_threshold,
        graph,
        drugs,
        cells,
        features,
        importance,
        records,
        responses_read: responses.len(),
        responses_dropped: responses.len() - usable.len(),
        pairs_discarded: plan.discarded,
    }
    .round_to_f32())
}
