//! Direct-formula oracles for metrics and importance analysis.
#![allow(dead_code)]

use graphpine::analysis::{
    compare_importance, cosine as cosine_of, rank_shift_stats, spearman as spearman_of, RankShift,
};
use graphpine::metrics::{confusion_metrics, pr_auc, roc_auc};
use graphpine::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pairwise ROC-AUC: wins plus half ties over all positive/negative pairs.
pub fn roc_pairs(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    (pairs > 0).then(|| twice as f64 / (2 * pairs) as f64)
}

/// Average precision by recounting at every distinct threshold.
pub fn ap_thresholds(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 {
        return None;
    }
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in ts {
        let tp = labels.iter().zip(scores).filter(|(&y, &s)| y == 1 && s >= t).count();
        let fp = labels.iter().zip(scores).filter(|(&y, &s)| y == 0 && s >= t).count();
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
        prev_recall = recall;
    }
    Some(ap)
}

/// Average precision as the mean over positives of the precision at that
/// positive's score, in exact rational arithmetic.
pub fn ap_rational(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u128;
    if n_pos == 0 {
        return None;
    }
    // Σ_i tp_i / k_i, kept as num / den
    let (mut num, mut den) = (0u128, 1u128);
    for (i, _) in labels.iter().enumerate().filter(|(_, &y)| y == 1) {
        let at = |y: u8| {
            labels
                .iter()
                .zip(scores)
                .filter(|(&l, &s)| l == y && s >= scores[i])
                .count() as u128
        };
        let (tp, k) = (at(1), at(1) + at(0));
        num = num * k + tp * den;
        den *= k;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    Some(num as f64 / (den * n_pos) as f64)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Average ranks by counting: `#{less} + (#{equal} + 1) / 2`.
pub fn ranks_by_counting(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va.sqrt() * vb.sqrt()))
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&ranks_by_counting(a), &ranks_by_counting(b))
}

/// Descending position of each entry, ties to the lower index, by counting.
pub fn positions_by_counting(v: &[f64]) -> Vec<i64> {
    (0..v.len())
        .map(|i| {
            let ahead = (0..v.len()).filter(|&j| v[j] > v[i] || (v[j] == v[i] && j < i)).count();
            ahead as i64 + 1
        })
        .collect()
}

/// `(pct changed, mean |shift|, max up, max down)`.
pub fn rank_shift(before: &[f64], after: &[f64]) -> (f64, f64, i64, i64) {
    let (pb, pa) = (positions_by_counting(before), positions_by_counting(after));
    let shifts: Vec<i64> = pb.iter().zip(&pa).map(|(b, a)| b - a).collect();
    let n = shifts.len() as f64;
    (
        100.0 * shifts.iter().filter(|s| **s != 0).count() as f64 / n,
        shifts.iter().map(|s| s.abs() as f64).sum::<f64>() / n,
        shifts.iter().copied().max().unwrap().max(0),
        shifts.iter().copied().min().unwrap().min(0),
    )
}

/// Every label vector and every score vector over a three-value alphabet for
/// n = 1..=8; returns the number of (labels, scores) sets compared.
pub fn exhaustive() -> usize {
    const ALPHABET: [f64; 3] = [0.2, 0.5, 0.9];
    let mut checked = 0;
    for n in 1..=8usize {
        let mut scores = vec![0.0; n];
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            for s in scores.iter_mut() {
                *s = ALPHABET[c % 3];
                c /= 3;
            }
            for mask in 0..(1u32 << n) {
                let labels: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
                match (roc_auc(&labels, &scores), roc_pairs(&labels, &scores)) {
                    (Ok(a), Some(b)) => assert_eq!(a, b, "roc {labels:?} {scores:?}"),
                    (Err(Error::SingleClass), None) => {}
                    (a, b) => panic!("roc {labels:?} {scores:?}: {a:?} vs {b:?}"),
                }
                match (pr_auc(&labels, &scores), ap_thresholds(&labels, &scores)) {
                    (Ok(a), Some(b)) => {
                        assert_eq!(a, b, "ap {labels:?} {scores:?}");
                        let exact = ap_rational(&labels, &scores).unwrap();
                        assert!((a - exact).abs() <= 1e-15, "ap {labels:?} {scores:?}: {a} vs {exact}");
                    }
                    (Err(Error::NoPositives), None) => {}
                    (a, b) => panic!("ap {labels:?} {scores:?}: {a:?} vs {b:?}"),
                }
                checked += 1;
            }
        }
    }
    checked
}

/// Importance-like vectors: many exact zeros and ties.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..60);
    let draw = |rng: &mut ChaCha8Rng| match rng.random_range(0..4) {
        0 => 0.0,
        1 => [0.5, 1.0][rng.random_range(0..2)],
        _ => rng.random_range(0.0..1.0),
    };
    let a: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    let b: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    (a, b)
}

/// Cosine, Spearman and rank shift against the direct formulas; returns the pair count.
pub fn check_pairs(seed: u64, n: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for _ in 0..n {
        let (a, b) = random_pair(&mut rng);
        let zero = a.iter().all(|&x| x == 0.0) || b.iter().all(|&x| x == 0.0);
        match cosine_of(&a, &b) {
            Ok(c) => {
                assert!(!zero);
                assert!((c - cosine(&a, &b)).abs() < 1e-9);
            }
            Err(_) => assert!(zero),
        }
        match (spearman_of(&a, &b).unwrap(), spearman(&a, &b)) {
            (Some(x), Some(y)) => assert!((x - y).abs() < 1e-9, "{x} vs {y}"),
            (None, None) => {}
            other => panic!("{other:?}"),
        }
        let r = rank_shift_stats(&a, &b).unwrap();
        let (pct, avg, up, down) = rank_shift(&a, &b);
        assert!((r.pct_rank_changed - pct).abs() < 1e-9);
        assert!((r.avg_abs_shift - avg).abs() < 1e-9);
        assert_eq!((r.max_up, r.max_down), (up, down));
        compared += 1;
    }
    compared
}

/// Comparing a vector with itself gives the zero shift tuple and cosine exactly 1.
pub fn check_identity(seed: u64, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let (a, _) = random_pair(&mut rng);
        let r = rank_shift_stats(&a, &a).unwrap();
        assert_eq!(
            r,
            RankShift {
                pct_rank_changed: 0.0,
                avg_abs_shift: 0.0,
                max_up: 0,
                max_down: 0
            }
        );
        if a.iter().filter(|&&x| x != 0.0).count() >= 2 {
            let s = compare_importance(&a, &a).unwrap();
            assert_eq!(s.cosine, 1.0);
            let doubled: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
            assert_eq!(compare_importance(&a, &doubled).unwrap().cosine, 1.0);
        }
    }
}

/// Confusion counts and derived rates on hand-computed tables.
pub fn check_confusion_tables() {
    // labels 1 1 1 0 0 0 0 1, predictions 1 0 1 1 0 0 1 1: tp 3, fn 1, fp 2, tn 2
    let c = confusion_metrics(&[1, 1, 1, 0, 0, 0, 0, 1], &[1, 0, 1, 1, 0, 0, 1, 1]).unwrap();
    assert_eq!((c.tp, c.fn_, c.fp, c.tn), (3, 1, 2, 2));
    assert_eq!(c.accuracy, Some(5.0 / 8.0));
    assert_eq!(c.precision, Some(3.0 / 5.0));
    assert_eq!(c.specificity, Some(2.0 / 4.0));
    assert_eq!(c.npv, Some(2.0 / 3.0));

    // nothing predicted positive: precision undefined
    let c = confusion_metrics(&[1, 0, 0], &[0, 0, 0]).unwrap();
    assert_eq!((c.tp, c.fn_, c.fp, c.tn), (0, 1, 0, 2));
    assert_eq!(c.precision, None);
    assert_eq!(c.npv, Some(2.0 / 3.0));

    // no negatives at all: specificity undefined
    let c = confusion_metrics(&[1, 1], &[1, 0]).unwrap();
    assert_eq!(c.specificity, None);
    assert_eq!(c.accuracy, Some(0.5));
}
