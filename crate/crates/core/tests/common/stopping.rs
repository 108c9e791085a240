//! Independent early-stopping simulation and synthetic validation curves.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(stop epoch, best epoch)` under a patience counter that starts full,
/// resets on an improvement of at least `delta` over the best so far and
/// stops training when it reaches zero.
pub fn simulate(losses: &[f64], patience: usize, delta: f64, max_epochs: usize) -> (usize, usize) {
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut left = patience;
    let last = max_epochs.min(losses.len());
    for epoch in 1..=last {
        let v = losses[epoch - 1];
        if best - v >= delta {
            best = v;
            best_epoch = epoch;
            left = patience;
        } else {
            left -= 1;
            if left == 0 {
                return (epoch, best_epoch);
            }
        }
    }
    (last, best_epoch)
}

/// Twenty validation-loss curves: constant, monotone, noisy, plateaus,
/// improvements straddling δ, and late recoveries.
pub fn sequences() -> Vec<(Vec<f64>, usize, f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut out = vec![
        (vec![0.7; 60], 5, 1e-4, 60),
        ((0..50).map(|i| 1.0 - 0.01 * i as f64).collect(), 3, 1e-4, 50),
        ((0..50).map(|i| 1.0 - 0.01 * i as f64).collect(), 3, 1e-4, 20),
        ((0..40).map(|i| 0.5 + 0.01 * i as f64).collect(), 7, 1e-4, 40),
        // steps just below and exactly at δ
        ((0..40).map(|i| 1.0 - 0.5e-3 * i as f64).collect(), 4, 1e-3, 40),
        ((0..40).map(|i| 1.0 - 1e-3 * i as f64).collect(), 4, 1e-3, 40),
    ];
    // recovery right before patience runs out
    let mut v = vec![1.0, 0.9, 0.95, 0.95, 0.95, 0.8, 0.95, 0.95, 0.95, 0.95, 0.95];
    v.extend(std::iter::repeat_n(0.99, 10));
    out.push((v, 4, 1e-4, 30));
    out.push((vec![1.0, 0.5], 1, 0.0, 2));
    out.push((vec![1.0, 1.0, 1.0], 1, 0.0, 3));
    while out.len() < 20 {
        let n = rng.random_range(5..120);
        let mut x: f64 = rng.random_range(0.3..2.0);
        let drift = rng.random_range(-0.02..0.01);
        let noise = rng.random_range(0.0..0.05);
        let seq = (0..n)
            .map(|_| {
                x = (x + drift + rng.random_range(-noise..=noise)).max(0.01);
                x
            })
            .collect();
        let patience = rng.random_range(1..15);
        let delta = [0.0, 1e-4, 1e-3, 1e-2][rng.random_range(0..4)];
        let max_epochs = rng.random_range(1..=n + 10);
        out.push((seq, patience, delta, max_epochs));
    }
    out
}
