//! Random omics, DTI and response tables with their invariant checks.
#![allow(dead_code)]

use std::collections::BTreeSet;

use graphpine::dataprep::{
    binarize_ic50, compute_dti_score, tpm, zero_shot_split, DtiRecord, OmicsMatrix, OmicsSource, ResponseRecord,
    SplitConfig, SplitPlan, DEFAULT_IC50_THRESHOLD,
};
use graphpine::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_counts(rng: &mut ChaCha8Rng) -> OmicsMatrix {
    let (g, c) = (rng.random_range(1..40), rng.random_range(1..12));
    let values = (0..g * c)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0.0..1e5)
            }
        })
        .collect();
    OmicsMatrix::new(
        OmicsSource::Exp,
        (0..g).map(|i| format!("g{i}")).collect(),
        (0..c).map(|i| format!("c{i}")).collect(),
        values,
    )
    .unwrap()
}

/// Column sums of `n` random TPM matrices equal 1e6.
pub fn check_tpm(seed: u64, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    while checked < n {
        let m = random_counts(&mut rng);
        let Ok(t) = tpm(&m) else { continue };
        for c in 0..t.n_cells() {
            let s: f64 = (0..t.n_genes()).map(|g| t.value(g, c)).sum();
            assert!((s - 1e6).abs() / 1e6 < 1e-9, "column {c}: {s}");
        }
        checked += 1;
    }
}

/// DTI scores are 0 or in [0.5, 1], one nonzero per distinct database target.
pub fn check_dti(seed: u64, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genes: Vec<String> = (0..30).map(|i| format!("g{i}")).collect();
    for _ in 0..n {
        let k = rng.random_range(1..15);
        let recs: Vec<DtiRecord> = (0..k)
            .map(|_| {
                let in_database = rng.random_bool(0.8);
                DtiRecord {
                    drug_id: "d".into(),
                    gene_id: genes[rng.random_range(0..genes.len())].clone(),
                    pubmed_count: if in_database { rng.random_range(0..200) } else { 0 },
                    in_database,
                }
            })
            .collect();
        match compute_dti_score(&recs, &genes) {
            Ok(v) => {
                assert!(v.iter().all(|&s| s == 0.0 || (0.5..=1.0).contains(&s)), "{v:?}");
                let targets: BTreeSet<&str> = recs
                    .iter()
                    .filter(|r| r.in_database)
                    .map(|r| r.gene_id.as_str())
                    .collect();
                assert_eq!(v.nonzero_count(), targets.len());
            }
            Err(Error::EmptyRecordSet(_)) => assert!(recs.iter().all(|r| !r.in_database)),
            Err(e) => panic!("{e}"),
        }
    }
}

pub fn random_responses(rng: &mut ChaCha8Rng) -> Vec<ResponseRecord> {
    let (nd, nc) = (rng.random_range(3..15), rng.random_range(3..15));
    let mut out = Vec::new();
    for d in 0..nd {
        for c in 0..nc {
            if rng.random_bool(0.8) {
                let log_ic50 = rng.random_range(-8.0..-2.0);
                out.push(ResponseRecord {
                    drug_id: format!("d{d}"),
                    cell_id: format!("c{c}"),
                    log_ic50,
                    label: binarize_ic50(log_ic50, DEFAULT_IC50_THRESHOLD).unwrap(),
                });
            }
        }
    }
    out
}

/// Test entities never appear in train or validation; every pair is accounted for.
pub fn check_disjoint(responses: &[ResponseRecord], plan: &SplitPlan) {
    let seen_d: BTreeSet<&str> = SplitPlan::drugs(plan.train_pairs.iter().chain(&plan.val_pairs));
    let seen_c: BTreeSet<&str> = SplitPlan::cells(plan.train_pairs.iter().chain(&plan.val_pairs));
    assert!(SplitPlan::drugs(&plan.test_pairs).is_disjoint(&seen_d));
    assert!(SplitPlan::cells(&plan.test_pairs).is_disjoint(&seen_c));
    assert_eq!(
        plan.train_pairs.len() + plan.val_pairs.len() + plan.test_pairs.len() + plan.discarded,
        responses.len()
    );
}

/// Splits one random response table under `seeds` split seeds; returns how
/// many were non-degenerate.
pub fn check_splits(seed: u64, seeds: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let responses = random_responses(&mut rng);
    let mut ok = 0;
    for seed in 0..seeds {
        match zero_shot_split(
            &responses,
            &SplitConfig {
                seed,
                ..SplitConfig::default()
            },
        ) {
            Ok(plan) => {
                check_disjoint(&responses, &plan);
                ok += 1;
            }
            Err(Error::DegenerateSplit(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
    ok
}
