use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_tsv_rows;

/// Log-IC50 cut below which a cell line counts as sensitive.
pub const DEFAULT_IC50_THRESHOLD: f64 = -4.595;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub drug_id: String,
    pub cell_id: String,
    pub log_ic50: f64,
    pub label: u8,
}

/// 1 when `x < threshold`, else 0.
pub fn binarize_ic50(x: f64, threshold: f64) -> Result<u8> {
    if !x.is_finite() {
        return Err(Error::NonFiniteInput(x));
    }
    Ok(u8::from(x < threshold))
}

/// Reads `drug_id<TAB>cell_id<TAB>log_ic50` and labels each row.
pub fn read_responses(path: &Path, threshold: f64) -> Result<Vec<ResponseRecord>> {
    let mut out = Vec::new();
    for (line, f) in read_tsv_rows(path)? {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if f.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", f.len())));
        }
        let log_ic50: f64 = f[2].parse().map_err(|e| err(format!("log_ic50 `{}`: {e}", f[2])))?;
        out.push(ResponseRecord {
            drug_id: f[0].clone(),
            cell_id: f[1].clone(),
            label: binarize_ic50(log_ic50, threshold)?,
            log_ic50,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub cell_frac: f64,
    pub drug_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            cell_frac: 0.7,
            drug_frac: 0.6,
            val_frac: 0.2,
            seed: 0,
        }
    }
}

pub type Pair = (String, String);

/// Zero-shot partition of `(drug, cell)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_pairs: Vec<Pair>,
    pub val_pairs: Vec<Pair>,
    pub test_pairs: Vec<Pair>,
    pub seed: u64,
    /// Pairs mixing a seen and an unseen entity; kept out of every split.
    pub discarded: usize,
}

impl SplitPlan {
    pub fn drugs<'a>(pairs: impl IntoIterator<Item = &'a Pair>) -> BTreeSet<&'a str> {
        pairs.into_iter().map(|(d, _)| d.as_str()).collect()
    }

    pub fn cells<'a>(pairs: impl IntoIterator<Item = &'a Pair>) -> BTreeSet<&'a str> {
        pairs.into_iter().map(|(_, c)| c.as_str()).collect()
    }
}

/// Samples `⌈cell_frac·C⌉` cells and `⌈drug_frac·D⌉` drugs for training.
///
/// Pairs with both entities sampled form the train/validation pool, pairs
/// with neither form the test set, and mixed pairs are discarded. The
/// validation share of the pool is `round(val_frac · pool)`, at most
/// `pool - 1`. Train and test must be non-empty; validation may be empty
/// when the pool is too small to hold it.
pub fn zero_shot_split(responses: &[ResponseRecord], cfg: &SplitConfig) -> Result<SplitPlan> {
    for (name, f) in [("cell_frac", cfg.cell_frac), ("drug_frac", cfg.drug_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidValue(format!("{name} = {f} is outside (0, 1)")));
        }
    }
    if !(0.0..1.0).contains(&cfg.val_frac) {
        return Err(Error::InvalidValue(format!(
            "val_frac = {} is outside [0, 1)",
            cfg.val_frac
        )));
    }
    let drugs: Vec<&str> = responses
        .iter()
        .map(|r| r.drug_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cells: Vec<&str> = responses
        .iter()
        .map(|r| r.cell_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if drugs.len() < 2 || cells.len() < 2 {
        return Err(Error::DegenerateSplit(format!(
            "{} drug(s) and {} cell line(s); at least 2 of each required",
            drugs.len(),
            cells.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pick = |items: &[&str], frac: f64, rng: &mut ChaCha8Rng| -> BTreeSet<String> {
        let n = ((frac * items.len() as f64).ceil() as usize).min(items.len());
        let mut shuffled = items.to_vec();
        shuffled.shuffle(rng);
        shuffled.into_iter().take(n).map(str::to_owned).collect()
    };
    let seen_cells = pick(&cells, cfg.cell_frac, &mut rng);
    let seen_drugs = pick(&drugs, cfg.drug_frac, &mut rng);

    let mut pool = Vec::new();
    let mut test = Vec::new();
    let mut discarded = 0;
    for r in responses {
        let pair = (r.drug_id.clone(), r.cell_id.clone());
        match (seen_drugs.contains(&r.drug_id), seen_cells.contains(&r.cell_id)) {
            (true, true) => pool.push(pair),
            (false, false) => test.push(pair),
            _ => discarded += 1,
        }
    }

    let n_val = if pool.len() < 2 {
        0
    } else {
        ((cfg.val_frac * pool.len() as f64).round() as usize).min(pool.len() - 1)
    };
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    let val_idx: BTreeSet<usize> = order.into_iter().take(n_val).collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, pair) in pool.into_iter().enumerate() {
        if val_idx.contains(&i) {
            val.push(pair);
        } else {
            train.push(pair);
        }
    }

    if train.is_empty() || test.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "train={} val={} test={}",
            train.len(),
            val.len(),
            test.len()
        )));
    }
    Ok(SplitPlan {
        train_pairs: train,
        val_pairs: val,
        test_pairs: test,
        seed: cfg.seed,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(drugs: usize, cells: usize) -> Vec<ResponseRecord> {
        let mut out = Vec::new();
        for d in 0..drugs {
            for c in 0..cells {
                out.push(ResponseRecord {
                    drug_id: format!("d{d}"),
                    cell_id: format!("c{c}"),
                    log_ic50: -5.0,
                    label: 1,
                });
            }
        }
        out
    }

    #[test]
    fn binarize_boundary() {
        assert_eq!(binarize_ic50(-5.0, DEFAULT_IC50_THRESHOLD).unwrap(), 1);
        assert_eq!(binarize_ic50(-4.595, DEFAULT_IC50_THRESHOLD).unwrap(), 0);
        assert_eq!(binarize_ic50(0.0, DEFAULT_IC50_THRESHOLD).unwrap(), 0);
        assert!(matches!(
            binarize_ic50(f64::NAN, DEFAULT_IC50_THRESHOLD),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn two_by_two_gives_single_test_pair() {
        let cfg = SplitConfig {
            cell_frac: 0.5,
            drug_frac: 0.5,
            ..SplitConfig::default()
        };
        for seed in 0..10 {
            let plan = zero_shot_split(&grid(2, 2), &SplitConfig { seed, ..cfg }).unwrap();
            assert_eq!(plan.test_pairs.len(), 1);
            assert_eq!(plan.train_pairs.len(), 1);
            assert_eq!(plan.discarded, 2);
            let (d, c) = &plan.test_pairs[0];
            assert_ne!(d, &plan.train_pairs[0].0);
            assert_ne!(c, &plan.train_pairs[0].1);
        }
    }

    #[test]
    fn degenerate_when_everything_selected() {
        // ceil(0.7 * 2) = 2 cells → no unseen cell for testing
        let r = zero_shot_split(&grid(3, 2), &SplitConfig::default());
        assert!(matches!(r, Err(Error::DegenerateSplit(_))));
        assert!(matches!(
            zero_shot_split(&grid(1, 5), &SplitConfig::default()),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn seeded_replay() {
        let data = grid(10, 6);
        let cfg = SplitConfig {
            seed: 42,
            ..SplitConfig::default()
        };
        assert_eq!(
            zero_shot_split(&data, &cfg).unwrap(),
            zero_shot_split(&data, &cfg).unwrap()
        );
    }
}
