//! Acquisition functions and the per-method batch selection dispatcher.
//!
//! Candidates are always the censored instances of the pool. Batch results
//! refer to positions in `pool.instances`.

pub mod baselines;
pub mod cfb;
pub mod mi;
pub mod transforms;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mtlr::{predict, BinProbTensor, PosteriorSampleSet};
use crate::select::{greedy_ratio, select_by_ranking, MarginalOracle, SelectionResult, TraceRow};

pub use cfb::CfbConfig;
pub use mi::{batch_mutual_information, ClassDist, JointEntropy, MiMode};
pub use transforms::{p_cens_from_log, to_p_cens, to_p_final, CensoredProbRow, ClassLabel, KnowableProbRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BbSurv,
    #[serde(rename = "batchbald")]
    BatchBald,
    Entropy,
    Variance,
    Cth,
    Mctm,
    Cfb,
    Cbald,
    Ideal,
    Random,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::BbSurv,
        Method::BatchBald,
        Method::Entropy,
        Method::Variance,
        Method::Cth,
        Method::Mctm,
        Method::Cfb,
        Method::Cbald,
        Method::Ideal,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BbSurv => "bb_surv",
            Method::BatchBald => "batchbald",
            Method::Entropy => "entropy",
            Method::Variance => "variance",
            Method::Cth => "cth",
            Method::Mctm => "mctm",
            Method::Cfb => "cfb",
            Method::Cbald => "cbald",
            Method::Ideal => "ideal",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown acquisition method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionParams {
    /// Years of extra follow-up one probe reveals.
    pub probe_depth: f64,
    pub mi: MiMode,
    /// C-BALD multiplier for censored instances.
    pub censor_weight: f64,
    /// IDEAL exploration weight.
    pub ideal_weight: f64,
    pub cfb_pca_dims: usize,
    pub cfb_clusters: usize,
    pub cfb_max_iter: usize,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        Self {
            probe_depth: 1.0,
            mi: MiMode::default(),
            censor_weight: 1.5,
            ideal_weight: 1.0,
            cfb_pca_dims: 2,
            cfb_clusters: 5,
            cfb_max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchScore {
    /// Mutual information in bits.
    pub value: f64,
    pub batch: Vec<usize>,
}

fn censor_bin(pool: &Dataset, position: usize) -> usize {
    pool.bins.bin_of(pool.instances[position].t_obs)
}

fn predict_positions(pool: &Dataset, samples: &PosteriorSampleSet, positions: &[usize]) -> Result<BinProbTensor> {
    let xs: Vec<&[f64]> = positions.iter().map(|&p| pool.instances[p].x.as_slice()).collect();
    predict(samples, &xs, &pool.bins)
}

fn require_censored(pool: &Dataset, batch: &[usize]) -> Result<()> {
    for &p in batch {
        let inst = pool
            .instances
            .get(p)
            .ok_or_else(|| Error::Validation(format!("position {p} outside pool of {}", pool.len())))?;
        if !inst.is_censored() {
            return Err(Error::Validation(format!("instance {} is not censored", inst.id)));
        }
    }
    Ok(())
}

/// Per-sample `p_cens` rows restricted to the bins that can still hold the
/// event. `tensor` rows follow `positions`.
pub fn censored_dists(pool: &Dataset, tensor: &BinProbTensor, positions: &[usize]) -> Result<Vec<ClassDist>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let j = censor_bin(pool, p);
            let mut probs = Vec::with_capacity(tensor.n_samples * (tensor.n_bins - j));
            for s in 0..tensor.n_samples {
                probs.extend_from_slice(p_cens_from_log(tensor.log_row(i, s), j).support());
            }
            ClassDist::new(tensor.n_samples, tensor.n_bins - j, probs)
        })
        .collect()
}

/// Per-sample `p_final` rows for a probe of `depth` years.
pub fn knowable_dists(
    pool: &Dataset,
    tensor: &BinProbTensor,
    positions: &[usize],
    depth: f64,
) -> Result<Vec<ClassDist>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let j = censor_bin(pool, p);
            let c = pool.instances[p].t_obs;
            let mut probs = Vec::new();
            let mut classes = 0;
            for s in 0..tensor.n_samples {
                let row = to_p_final(&p_cens_from_log(tensor.log_row(i, s), j), c, depth, &pool.bins);
                classes = row.probs.len();
                probs.extend(row.probs);
            }
            ClassDist::new(tensor.n_samples, classes, probs)
        })
        .collect()
}

fn score_with(
    batch: &[usize],
    pool: &Dataset,
    samples: &PosteriorSampleSet,
    mode: MiMode,
    depth: Option<f64>,
) -> Result<BatchScore> {
    require_censored(pool, batch)?;
    if batch.is_empty() {
        return Ok(BatchScore { value: 0.0, batch: Vec::new() });
    }
    let tensor = predict_positions(pool, samples, batch)?;
    let dists = match depth {
        Some(k) => knowable_dists(pool, &tensor, batch, k)?,
        None => censored_dists(pool, &tensor, batch)?,
    };
    let refs: Vec<&ClassDist> = dists.iter().collect();
    Ok(BatchScore {
        value: batch_mutual_information(&refs, mode)?,
        batch: batch.to_vec(),
    })
}

/// Batch mutual information over the outcomes a probe of `depth` can reveal.
pub fn score_bb_surv(
    batch: &[usize],
    pool: &Dataset,
    samples: &PosteriorSampleSet,
    depth: f64,
    mode: MiMode,
) -> Result<BatchScore> {
    if !(depth >= 0.0) {
        return Err(Error::Validation(format!("probe depth must be non-negative, got {depth}")));
    }
    score_with(batch, pool, samples, mode, Some(depth))
}

/// Batch mutual information over the full `p_cens` label space.
pub fn score_batchbald(batch: &[usize], pool: &Dataset, samples: &PosteriorSampleSet, mode: MiMode) -> Result<BatchScore> {
    score_with(batch, pool, samples, mode, None)
}

/// Incremental batch mutual information over fixed candidate distributions.
pub struct BatchMiOracle {
    dists: Vec<ClassDist>,
    joint: JointEntropy,
}

impl BatchMiOracle {
    pub fn new(dists: Vec<ClassDist>, mode: MiMode) -> Result<Self> {
        let s = dists.first().map_or(1, ClassDist::n_samples);
        Ok(Self {
            joint: JointEntropy::new(s, mode)?,
            dists,
        })
    }
}

impl MarginalOracle for BatchMiOracle {
    fn len(&self) -> usize {
        self.dists.len()
    }

    fn gain(&self, candidate: usize) -> f64 {
        self.joint.gain(&self.dists[candidate])
    }

    fn commit(&mut self, candidate: usize) -> Result<()> {
        self.joint.push(&self.dists[candidate])
    }

    fn value(&self) -> f64 {
        self.joint.value()
    }
}

/// `(1 - delta) * (1 - t_obs / t_max)` per pool instance.
fn censoring_measure(pool: &Dataset) -> Vec<f64> {
    let t_max = pool.instances.iter().map(|i| i.t_obs).fold(0.0f64, f64::max);
    pool.instances
        .iter()
        .map(|i| {
            if i.delta_obs || t_max <= 0.0 {
                0.0
            } else {
                1.0 - i.t_obs / t_max
            }
        })
        .collect()
}

/// Chooses a batch for `method` within `budget`.
///
/// `seed` drives the stochastic parts (sampled joint entropy, random order,
/// k-means initialization). Trace rows are written only by the greedy
/// methods and carry instance ids.
pub fn select(
    method: Method,
    pool: &Dataset,
    samples: &PosteriorSampleSet,
    budget: f64,
    params: &AcquisitionParams,
    seed: u64,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<SelectionResult> {
    let positions = pool.censored_positions();
    if positions.is_empty() || budget <= 0.0 {
        return Ok(SelectionResult::empty());
    }
    let costs: Vec<f64> = positions.iter().map(|&p| pool.instances[p].cost).collect();
    let by_rank = |order: Vec<usize>| select_by_ranking(&order, &costs, budget);

    let local = match method {
        Method::BbSurv | Method::BatchBald => {
            let tensor = predict_positions(pool, samples, &positions)?;
            let dists = if method == Method::BbSurv {
                knowable_dists(pool, &tensor, &positions, params.probe_depth)?
            } else {
                censored_dists(pool, &tensor, &positions)?
            };
            let mut oracle = BatchMiOracle::new(dists, params.mi.with_seed(seed))?;
            let mut rows = Vec::new();
            let res = greedy_ratio(&mut oracle, &costs, budget, trace.is_some().then_some(&mut rows))?;
            if let Some(out) = trace {
                out.extend(rows.into_iter().map(|r| TraceRow {
                    candidate_id: pool.instances[positions[r.candidate_id]].id,
                    ..r
                }));
            }
            res
        }
        Method::Random => by_rank(baselines::random_order(&costs, seed))?,
        Method::Cfb => {
            let xs: Vec<&[f64]> = pool.instances.iter().map(|i| i.x.as_slice()).collect();
            let cfg = CfbConfig {
                pca_dims: params.cfb_pca_dims,
                n_clusters: params.cfb_clusters,
                max_iter: params.cfb_max_iter,
                seed,
            };
            let ranked = cfb::score_cfb(&xs, &censoring_measure(pool), &positions, &cfg)?;
            let local_of = |p: usize| positions.binary_search(&p).expect("candidate position");
            by_rank(ranked.into_iter().map(local_of).collect())?
        }
        _ => {
            let tensor = predict_positions(pool, samples, &positions)?;
            let n_samples = tensor.n_samples;
            let p_cens_rows = |i: usize| -> Vec<Vec<f64>> {
                let j = censor_bin(pool, positions[i]);
                (0..n_samples)
                    .map(|s| p_cens_from_log(tensor.log_row(i, s), j).probs)
                    .collect()
            };
            let mean_row = |rows: &[Vec<f64>]| -> Vec<f64> {
                let mut m = vec![0.0; rows[0].len()];
                for r in rows {
                    m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
                }
                m.iter_mut().for_each(|v| *v /= rows.len() as f64);
                m
            };
            let (scores, descending): (Vec<f64>, bool) = match method {
                Method::Entropy => (
                    (0..positions.len()).map(|i| baselines::score_entropy(&mean_row(&p_cens_rows(i)))).collect(),
                    true,
                ),
                Method::Variance => (
                    (0..positions.len()).map(|i| baselines::score_variance(&mean_row(&p_cens_rows(i)))).collect(),
                    true,
                ),
                Method::Cth => (
                    (0..positions.len())
                        .map(|i| {
                            let c = pool.instances[positions[i]].t_obs;
                            baselines::score_cth(&mean_row(&p_cens_rows(i)), c, params.probe_depth, &pool.bins)
                        })
                        .collect(),
                    false,
                ),
                Method::Mctm => (
                    (0..positions.len()).map(|i| baselines::score_mctm(&mean_row(&p_cens_rows(i)))).collect(),
                    false,
                ),
                Method::Cbald => {
                    let dists = censored_dists(pool, &tensor, &positions)?;
                    (
                        dists.iter().map(|d| baselines::score_cbald(d, true, params.censor_weight)).collect(),
                        true,
                    )
                }
                Method::Ideal => {
                    let queried: Vec<&[f64]> = pool
                        .instances
                        .iter()
                        .filter(|i| !i.is_censored())
                        .map(|i| i.x.as_slice())
                        .collect();
                    (
                        (0..positions.len())
                            .map(|i| {
                                let s2 = baselines::ideal_variance(&p_cens_rows(i));
                                let z = baselines::ideal_distance(&pool.instances[positions[i]].x, &queried);
                                baselines::score_ideal(s2, z, params.ideal_weight)
                            })
                            .collect(),
                        true,
                    )
                }
                _ => unreachable!("handled above"),
            };
            by_rank(baselines::rank(&scores, descending))?
        }
    };

    Ok(SelectionResult {
        batch: local.batch.iter().map(|&i| positions[i]).collect(),
        total_cost: local.total_cost,
        value: local.value,
        score_trace: local.score_trace.iter().map(|&(i, r)| (positions[i], r)).collect(),
    })
}
