#![allow(dead_code)]

use std::collections::BTreeMap;

use bbsurv::acquisition::mi::ClassDist;
use bbsurv::data::{Dataset, SurvivalInstance, TimeBins};
use bbsurv::mtlr::{sample_posterior, PosteriorSampleSet, VariationalPosterior};
use bbsurv::select::{CoverageInstance, CoverageSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random categorical rows with strictly positive entries.
pub fn random_dist(rng: &mut ChaCha8Rng, samples: usize, classes: usize) -> ClassDist {
    let mut probs = Vec::with_capacity(samples * classes);
    for _ in 0..samples {
        let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.01..1.0)).collect();
        let z: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|r| r / z));
    }
    ClassDist::new(samples, classes, probs).unwrap()
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// `I(y_1..y_b; w)` in bits by enumerating every joint label configuration.
pub fn brute_force_mi(dists: &[&ClassDist]) -> f64 {
    if dists.is_empty() {
        return 0.0;
    }
    let s = dists[0].n_samples();
    let sizes: Vec<usize> = dists.iter().map(|d| d.n_classes()).collect();
    let total: usize = sizes.iter().product();
    let mut joint = 0.0;
    for mut code in 0..total {
        let mut labels = Vec::with_capacity(dists.len());
        for &m in &sizes {
            labels.push(code % m);
            code /= m;
        }
        let mean: f64 = (0..s)
            .map(|k| dists.iter().zip(&labels).map(|(d, &y)| d.row(k)[y]).product::<f64>())
            .sum::<f64>()
            / s as f64;
        joint += h(mean);
    }
    let cond: f64 = dists
        .iter()
        .map(|d| (0..s).map(|k| d.row(k).iter().map(|&p| h(p)).sum::<f64>()).sum::<f64>() / s as f64)
        .sum();
    joint - cond
}

/// Censored pool over five bins with edges 1..4; every third instance is an event.
pub fn toy_pool(seed: u64, n: usize) -> Dataset {
    let mut rng = rng(seed);
    let instances = (0..n)
        .map(|i| {
            let t_true = rng.random_range(0.5..6.0);
            let censored = i % 3 != 0;
            let t_obs = if censored { t_true * rng.random_range(0.1..0.9) } else { t_true };
            SurvivalInstance {
                id: i,
                x: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                t_true,
                delta_true: true,
                t_obs,
                delta_obs: !censored,
                cost: rng.random_range(0.5..1.5),
            }
        })
        .collect();
    Dataset::new(instances, TimeBins::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap(), vec!["a".into(), "b".into()]).unwrap()
}

/// Posterior draws around a random mean for a 5-bin, 2-feature model.
pub fn toy_samples(seed: u64, count: usize) -> PosteriorSampleSet {
    let mut q = VariationalPosterior::new(5, 2, -0.5, seed);
    let mut rng = rng(seed ^ 0x5eed);
    q.mu.iter_mut().for_each(|m| *m = rng.random_range(-1.5..1.5));
    sample_posterior(&q, count, seed).unwrap()
}

/// Four unit-cost sets over elements 1..6 with budget 2.
pub fn worked_coverage(weight_six: f64) -> CoverageInstance {
    let mut weights: BTreeMap<u32, f64> = (1..=5).map(|e| (e, 1.0)).collect();
    weights.insert(6, weight_six);
    let sets = [vec![1, 2, 3], vec![2, 3, 4], vec![4, 5], vec![6]]
        .into_iter()
        .map(|elements| CoverageSet { elements, cost: 1.0 })
        .collect();
    CoverageInstance { weights, sets, budget: 2.0 }
}

pub fn random_coverage(rng: &mut ChaCha8Rng) -> CoverageInstance {
    let n_elems = rng.random_range(1..=10u32);
    let weights = (0..n_elems).map(|e| (e, rng.random_range(0.0..10.0))).collect();
    let n_sets = rng.random_range(1..=12);
    let sets = (0..n_sets)
        .map(|_| CoverageSet {
            elements: (0..n_elems).filter(|_| rng.random_bool(0.35)).collect(),
            cost: rng.random_range(0.2..3.0),
        })
        .collect::<Vec<_>>();
    let total: f64 = sets.iter().map(|s: &CoverageSet| s.cost).sum();
    CoverageInstance {
        weights,
        sets,
        budget: rng.random_range(0.1..1.0) * total,
    }
}

/// Best weight over every affordable subset, computed directly.
pub fn coverage_optimum(inst: &CoverageInstance) -> f64 {
    let n = inst.sets.len();
    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << n) {
        let chosen: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let cost: f64 = chosen.iter().map(|&i| inst.sets[i].cost).sum();
        if cost > inst.budget + 1e-12 {
            continue;
        }
        let mut covered = std::collections::BTreeSet::new();
        for &i in &chosen {
            covered.extend(inst.sets[i].elements.iter().copied());
        }
        best = best.max(covered.iter().map(|e| inst.weights.get(e).copied().unwrap_or(0.0)).sum());
    }
    best
}

pub fn instance(t: f64, event: bool) -> SurvivalInstance {
    SurvivalInstance {
        id: 0,
        x: vec![0.0],
        t_true: t,
        delta_true: event,
        t_obs: t,
        delta_obs: event,
        cost: 1.0,
    }
}

/// Product-limit estimate at `t`, recomputed from scratch.
pub fn km_at(pairs: &[(f64, bool)], t: f64) -> f64 {
    let mut times: Vec<f64> = pairs.iter().filter(|p| p.1 && p.0 <= t).map(|p| p.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&u| {
            let at_risk = pairs.iter().filter(|p| p.0 >= u).count() as f64;
            let deaths = pairs.iter().filter(|p| p.1 && p.0 == u).count() as f64;
            1.0 - deaths / at_risk
        })
        .product()
}

/// Area under the product-limit curve up to `tau`.
pub fn rmst(pairs: &[(f64, bool)], tau: f64) -> f64 {
    let mut knots: Vec<f64> = pairs.iter().map(|p| p.0).filter(|&t| t < tau).collect();
    knots.push(0.0);
    knots.push(tau);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots.windows(2).map(|w| km_at(pairs, w[0]) * (w[1] - w[0])).sum()
}

/// Pair-counting concordance with half credit for prediction ties.
pub fn concordance(preds: &[f64], pairs: &[(f64, bool)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..pairs.len() {
        for j in 0..pairs.len() {
            if pairs[i].1 && pairs[i].0 < pairs[j].0 {
                den += 1.0;
                num += if preds[i] < preds[j] {
                    1.0
                } else if preds[i] == preds[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}
