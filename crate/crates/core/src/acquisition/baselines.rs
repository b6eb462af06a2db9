//! Per-instance baseline scores.
//!
//! Unless noted otherwise the input is the mean-over-samples `p_cens` row of
//! a censored instance. Entropy, variance and C-BALD rank high scores first;
//! CtH and MCtM rank low scores first.

use std::f64::consts::FRAC_2_PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mi::{bald, entropy_bits, ClassDist};
use crate::data::TimeBins;

pub fn score_entropy(row: &[f64]) -> f64 {
    entropy_bits(row)
}

/// Population variance of the bin probabilities.
pub fn score_variance(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    row.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n
}

/// Mass of the bins from the one holding `censor_time` to the one holding
/// `censor_time + depth`, inclusive.
pub fn probe_window_mass(row: &[f64], censor_time: f64, depth: f64, bins: &TimeBins) -> f64 {
    let lo = bins.bin_of(censor_time);
    let hi = bins.bin_of(censor_time + depth).min(row.len() - 1);
    row[lo..=hi].iter().sum()
}

/// `|p_window - 0.5|`; lower is better.
pub fn score_cth(row: &[f64], censor_time: f64, depth: f64, bins: &TimeBins) -> f64 {
    (probe_window_mass(row, censor_time, depth, bins) - 0.5).abs()
}

/// Expected bin index, counting bins from 1.
pub fn mean_bin_index(row: &[f64]) -> f64 {
    row.iter().enumerate().map(|(r, p)| (r + 1) as f64 * p).sum()
}

/// `|mean bin index - (n + 1) / 2|`; lower is better.
pub fn score_mctm(row: &[f64]) -> f64 {
    (mean_bin_index(row) - (row.len() + 1) as f64 / 2.0).abs()
}

/// BALD on `p_cens`, scaled by `censor_weight` for censored instances.
pub fn score_cbald(dist: &ClassDist, censored: bool, censor_weight: f64) -> f64 {
    let w = if censored { censor_weight } else { 1.0 };
    w * bald(dist)
}

/// Variance across posterior samples of the expected bin index.
pub fn ideal_variance(rows: &[Vec<f64>]) -> f64 {
    let m: Vec<f64> = rows.iter().map(|r| mean_bin_index(r)).collect();
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m.len() as f64
}

/// Inverse-distance-weighted distance to the queried points, squashed to
/// `[0, 1]`: `z = (2/pi) atan(1 / sum_i w_i)` with `w_i = exp(-d_i^2) / d_i^2`.
/// A point that coincides with a queried point scores 0; with nothing
/// queried the score is 1.
pub fn ideal_distance(x: &[f64], queried: &[&[f64]]) -> f64 {
    let mut total = 0.0;
    for q in queried {
        let d2: f64 = x.iter().zip(*q).map(|(a, b)| (a - b).powi(2)).sum();
        if d2 == 0.0 {
            return 0.0;
        }
        total += (-d2).exp() / d2;
    }
    if total == 0.0 {
        return 1.0;
    }
    FRAC_2_PI * (1.0 / total).atan()
}

/// `s^2(x) + d * z(x)`.
pub fn score_ideal(variance: f64, distance: f64, weight: f64) -> f64 {
    variance + weight * distance
}

/// Order drawn by sequential sampling without replacement with probability
/// proportional to `1 / cost`, via exponential keys `ln(u) * cost`.
pub fn random_order(costs: &[f64], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize)> = costs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (u.ln() * c, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Indices sorted by score, highest first when `descending`, ties to the
/// lowest index.
pub fn rank(scores: &[f64], descending: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let c = scores[a].total_cmp(&scores[b]);
        if descending { c.reverse() } else { c }.then(a.cmp(&b))
    });
    order
}
