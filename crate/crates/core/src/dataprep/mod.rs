//! Data preparation: omics normalisation, drug-target importance, gene
//! selection, response labelling, zero-shot splitting and sample assembly.

mod bundle;
mod dti;
mod omics;
mod sample;
mod select;
mod split;

pub use bundle::{
    prepare_bundle, BundleCounts, BundleManifest, BundleMetadata, BundleRecord, DatasetBundle, PrepConfig, PrepInputs,
    Split, BUNDLE_FORMAT, BUNDLE_VERSION,
};
pub use dti::{compute_dti_score, group_by_drug, read_dti, DtiRecord, ImportanceVector};
pub use omics::{
    assemble_node_features, log2_plus_one, percentile, preprocess_expression, tpm, winsorize, OmicsMatrix, OmicsSet,
    OmicsSource,
};
pub use sample::{assemble_sample, Dataset, SampleTensor};
pub use select::{compute_gene_stats, sample_variance, select_genes, GeneStats};
pub use split::{
    binarize_ic50, read_responses, zero_shot_split, Pair, ResponseRecord, SplitConfig, SplitPlan,
    DEFAULT_IC50_THRESHOLD,
};
