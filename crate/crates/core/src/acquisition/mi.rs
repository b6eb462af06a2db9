//! Mutual information between a batch of labels and the model parameters,
//! estimated from posterior samples:
//!
//! ```text
//! I(y_1..y_b; w) = H(y_1..y_b) - (1/S) sum_j sum_i H(y_i | w_j)
//! p(y_1..y_b)    = (1/S) sum_j prod_i p(y_i | w_j)
//! ```
//!
//! The joint entropy is exact while the product configuration space stays
//! under a limit and is otherwise estimated from sampled configurations.
//! Each instance may have its own class count. All entropies are in bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EXACT_LIMIT: usize = 100_000;
pub const DEFAULT_SAMPLED_CONFIGS: usize = 10_000;

/// Per-posterior-sample class distributions of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDist {
    n_samples: usize,
    n_classes: usize,
    /// `n_samples x n_classes`
    probs: Vec<f64>,
    /// `n_classes x n_samples`
    by_class: Vec<f64>,
    expected_entropy: f64,
}

fn plogp_bits(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

pub fn entropy_bits(row: &[f64]) -> f64 {
    row.iter().map(|&p| plogp_bits(p)).sum()
}

impl ClassDist {
    pub fn new(n_samples: usize, n_classes: usize, probs: Vec<f64>) -> Result<Self> {
        if n_samples == 0 || n_classes == 0 || probs.len() != n_samples * n_classes {
            return Err(Error::Shape(format!(
                "{} probabilities for {n_samples} samples x {n_classes} classes",
                probs.len()
            )));
        }
        for row in probs.chunks(n_classes) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("class distribution sums to {sum}")));
            }
        }
        let mut by_class = vec![0.0; probs.len()];
        for s in 0..n_samples {
            for c in 0..n_classes {
                by_class[c * n_samples + s] = probs[s * n_classes + c];
            }
        }
        let expected_entropy =
            probs.chunks(n_classes).map(entropy_bits).sum::<f64>() / n_samples as f64;
        Ok(Self {
            n_samples,
            n_classes,
            probs,
            by_class,
            expected_entropy,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("ragged class distribution rows".into()));
        }
        Self::new(rows.len(), c, rows.concat())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        &self.probs[sample * self.n_classes..(sample + 1) * self.n_classes]
    }

    fn class_column(&self, class: usize) -> &[f64] {
        &self.by_class[class * self.n_samples..(class + 1) * self.n_samples]
    }

    /// `(1/S) sum_j H(y | w_j)`
    pub fn expected_entropy(&self) -> f64 {
        self.expected_entropy
    }

    pub fn mean_row(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_classes];
        for row in self.probs.chunks(self.n_classes) {
            for (a, p) in m.iter_mut().zip(row) {
                *a += p;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n_samples as f64);
        m
    }
}

/// Single-instance mutual information (BALD).
pub fn bald(dist: &ClassDist) -> f64 {
    (entropy_bits(&dist.mean_row()) - dist.expected_entropy()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MiMode {
    /// Full enumeration; fails beyond `limit` configurations.
    Exact { limit: usize },
    /// Monte-Carlo joint entropy from `configs` sampled label configurations.
    Sampled { configs: usize, seed: u64 },
    /// Exact up to `exact_limit`, sampled afterwards.
    Auto {
        exact_limit: usize,
        configs: usize,
        seed: u64,
    },
}

impl Default for MiMode {
    fn default() -> Self {
        MiMode::Auto {
            exact_limit: DEFAULT_EXACT_LIMIT,
            configs: DEFAULT_SAMPLED_CONFIGS,
            seed: 0,
        }
    }
}

impl MiMode {
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            MiMode::Exact { .. } => self,
            MiMode::Sampled { configs, .. } => MiMode::Sampled { configs, seed },
            MiMode::Auto { exact_limit, configs, .. } => MiMode::Auto { exact_limit, configs, seed },
        }
    }
}

/// Running joint-entropy estimate for a growing batch.
///
/// Each stored row holds `prod_i p(y_i | w_j)` over the posterior samples
/// `j` for one label configuration. Exact rows enumerate every
/// configuration; sampled rows are draws from the joint predictive and carry
/// a per-row log scale so long products do not underflow.
#[derive(Debug, Clone)]
pub struct JointEntropy {
    n_samples: usize,
    rows: Vec<f64>,
    log_scale: Vec<f64>,
    exact: bool,
    mode: MiMode,
    rng: ChaCha8Rng,
    entropy: f64,
    conditional: f64,
    size: usize,
}

impl JointEntropy {
    pub fn new(n_samples: usize, mode: MiMode) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::Config("need at least one posterior sample".into()));
        }
        let (exact, configs, seed) = match mode {
            MiMode::Exact { .. } => (true, 1, 0),
            MiMode::Sampled { configs, seed } => (false, configs, seed),
            MiMode::Auto { seed, .. } => (true, 1, seed),
        };
        if configs == 0 {
            return Err(Error::Config("sampled mode needs at least one configuration".into()));
        }
        Ok(Self {
            n_samples,
            rows: vec![1.0; configs * n_samples],
            log_scale: vec![0.0; configs],
            exact,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            entropy: 0.0,
            conditional: 0.0,
            size: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn joint_entropy(&self) -> f64 {
        self.entropy
    }

    /// Current mutual-information estimate.
    pub fn value(&self) -> f64 {
        self.entropy - self.conditional
    }

    fn n_rows(&self) -> usize {
        self.log_scale.len()
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.rows[r * self.n_samples..(r + 1) * self.n_samples]
    }

    fn dot(row: &[f64], col: &[f64]) -> f64 {
        row.iter().zip(col).map(|(a, b)| a * b).sum()
    }

    fn check(&self, dist: &ClassDist) -> Result<()> {
        if dist.n_samples != self.n_samples {
            return Err(Error::Shape(format!(
                "{} posterior samples against a joint over {}",
                dist.n_samples, self.n_samples
            )));
        }
        Ok(())
    }

    /// Joint entropy of the batch extended by `dist`.
    pub fn extended_entropy(&self, dist: &ClassDist) -> f64 {
        let s = self.n_samples as f64;
        let mut h = 0.0;
        if self.exact {
            for r in 0..self.n_rows() {
                let row = self.row(r);
                for c in 0..dist.n_classes {
                    h += plogp_bits(Self::dot(row, dist.class_column(c)) / s);
                }
            }
        } else {
            let mut u = vec![0.0; dist.n_classes];
            for r in 0..self.n_rows() {
                let row = self.row(r);
                let mut total = 0.0;
                for (c, uc) in u.iter_mut().enumerate() {
                    *uc = Self::dot(row, dist.class_column(c)) / s;
                    total += *uc;
                }
                if total <= 0.0 {
                    continue;
                }
                let shift = self.log_scale[r] / std::f64::consts::LN_2;
                for &uc in &u {
                    if uc > 0.0 {
                        h -= uc / total * (uc.log2() + shift);
                    }
                }
            }
            h /= self.n_rows() as f64;
        }
        h
    }

    /// `I(A + {x}) - I(A)`.
    pub fn gain(&self, dist: &ClassDist) -> f64 {
        self.extended_entropy(dist) - self.entropy - dist.expected_entropy()
    }

    pub fn push(&mut self, dist: &ClassDist) -> Result<()> {
        self.check(dist)?;
        if self.exact {
            let configs = self.n_rows() as u128 * dist.n_classes as u128;
            let limit = match self.mode {
                MiMode::Exact { limit } => {
                    if configs > limit as u128 {
                        return Err(Error::ConfigSpaceOverflow { configs, limit: limit as u128 });
                    }
                    limit
                }
                MiMode::Auto { exact_limit, .. } => exact_limit,
                MiMode::Sampled { .. } => unreachable!("sampled joints are never exact"),
            };
            if configs > limit as u128 {
                self.resample_from_exact(dist);
            } else {
                self.expand_exact(dist);
            }
        } else {
            self.extend_sampled(dist);
        }
        self.size += 1;
        self.conditional += dist.expected_entropy();
        self.entropy = self.current_entropy();
        Ok(())
    }

    fn expand_exact(&mut self, dist: &ClassDist) {
        let s = self.n_samples;
        let mut rows = Vec::with_capacity(self.rows.len() * dist.n_classes);
        for r in 0..self.n_rows() {
            let row = self.row(r);
            for c in 0..dist.n_classes {
                rows.extend(row.iter().zip(dist.class_column(c)).map(|(a, b)| a * b));
            }
        }
        self.log_scale = vec![0.0; rows.len() / s];
        self.rows = rows;
    }

    fn configs(&self) -> usize {
        match self.mode {
            MiMode::Auto { configs, .. } | MiMode::Sampled { configs, .. } => configs,
            MiMode::Exact { .. } => unreachable!(),
        }
    }

    /// Draws configurations of the extended batch from its exact joint.
    fn resample_from_exact(&mut self, dist: &ClassDist) {
        let s = self.n_samples;
        let m = self.configs();
        let c_count = dist.n_classes;
        let mut cumulative = Vec::with_capacity(self.n_rows() * c_count);
        let mut acc = 0.0;
        for r in 0..self.n_rows() {
            let row = self.row(r);
            for c in 0..c_count {
                acc += Self::dot(row, dist.class_column(c)) / s as f64;
                cumulative.push(acc);
            }
        }
        let mut rows = Vec::with_capacity(m * s);
        let mut scales = Vec::with_capacity(m);
        for _ in 0..m {
            let u = self.rng.random::<f64>() * acc;
            let k = cumulative.partition_point(|&v| v <= u).min(cumulative.len() - 1);
            let (r, c) = (k / c_count, k % c_count);
            let start = rows.len();
            rows.extend(self.row(r).iter().zip(dist.class_column(c)).map(|(a, b)| a * b));
            scales.push(rescale(&mut rows[start..]));
        }
        self.rows = rows;
        self.log_scale = scales;
        self.exact = false;
    }

    fn extend_sampled(&mut self, dist: &ClassDist) {
        let s = self.n_samples;
        let mut u = vec![0.0; dist.n_classes];
        for r in 0..self.n_rows() {
            let mut total = 0.0;
            {
                let row = self.row(r);
                for (c, uc) in u.iter_mut().enumerate() {
                    *uc = Self::dot(row, dist.class_column(c));
                    total += *uc;
                }
            }
            let mut target = self.rng.random::<f64>() * total;
            let mut pick = dist.n_classes - 1;
            for (c, &uc) in u.iter().enumerate() {
                if target < uc {
                    pick = c;
                    break;
                }
                target -= uc;
            }
            let row = &mut self.rows[r * s..(r + 1) * s];
            for (a, b) in row.iter_mut().zip(dist.class_column(pick)) {
                *a *= b;
            }
            self.log_scale[r] += rescale(row);
        }
    }

    fn current_entropy(&self) -> f64 {
        let s = self.n_samples as f64;
        if self.exact {
            (0..self.n_rows())
                .map(|r| plogp_bits(self.row(r).iter().sum::<f64>() / s))
                .sum()
        } else {
            let total: f64 = (0..self.n_rows())
                .map(|r| {
                    let p = self.row(r).iter().sum::<f64>() / s;
                    -(p.log2() + self.log_scale[r] / std::f64::consts::LN_2)
                })
                .sum();
            total / self.n_rows() as f64
        }
    }
}

/// Scales `row` so its maximum is 1 and returns the natural log of the
/// factor removed.
fn rescale(row: &mut [f64]) -> f64 {
    let max = row.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 || !max.is_finite() {
        return 0.0;
    }
    row.iter_mut().for_each(|v| *v /= max);
    max.ln()
}

/// Mutual information of a whole batch, in bits. Empty batches score 0.
pub fn batch_mutual_information(dists: &[&ClassDist], mode: MiMode) -> Result<f64> {
    let Some(first) = dists.first() else {
        return Ok(0.0);
    };
    if let MiMode::Exact { limit } = mode {
        let configs = dists
            .iter()
            .try_fold(1u128, |acc, d| acc.checked_mul(d.n_classes as u128))
            .unwrap_or(u128::MAX);
        if configs > limit as u128 {
            return Err(Error::ConfigSpaceOverflow { configs, limit: limit as u128 });
        }
    }
    let mut joint = JointEntropy::new(first.n_samples, mode)?;
    for d in dists {
        joint.push(d)?;
    }
    Ok(joint.value().max(0.0))
}
