//! Variational Bayesian multi-task logistic regression over discrete time bins.
//!
//! With `n` bins there are `n - 1` thresholds, each with a weight row and a
//! bias. Threshold `j` contributes `a_j = w_j . x + b_j` and bin `r` scores
//! `s_r = sum_{j >= r} a_j` (the last bin scores 0). Bin probabilities are the
//! softmax of the scores.
//!
//! The posterior is a mean-field Gaussian over the flattened parameters
//! `[w_0, .., w_{n-2}, b]`, trained by maximizing a reparameterized ELBO with
//! Adam.

use std::f64::consts::{E, PI};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SurvivalInstance, TimeBins};
use crate::error::{Error, Result};

/// Point parameters of an MTLR model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlrParams {
    pub n_bins: usize,
    pub dim: usize,
    /// `(n_bins - 1) x dim`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub fn n_params(n_bins: usize, dim: usize) -> usize {
    (n_bins - 1) * (dim + 1)
}

impl MtlrParams {
    pub fn zeros(n_bins: usize, dim: usize) -> Self {
        Self {
            n_bins,
            dim,
            weights: vec![0.0; (n_bins - 1) * dim],
            biases: vec![0.0; n_bins - 1],
        }
    }

    pub fn from_flat(n_bins: usize, dim: usize, flat: &[f64]) -> Result<Self> {
        if n_bins < 2 || flat.len() != n_params(n_bins, dim) {
            return Err(Error::Shape(format!(
                "{} parameters for {n_bins} bins and {dim} features",
                flat.len()
            )));
        }
        let split = (n_bins - 1) * dim;
        Ok(Self {
            n_bins,
            dim,
            weights: flat[..split].to_vec(),
            biases: flat[split..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.biases);
        v
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim
            || self.weights.len() != (self.n_bins - 1) * self.dim
            || self.biases.len() != self.n_bins - 1
        {
            return Err(Error::Shape(format!(
                "covariates of length {} against a model for {} features",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Per-bin scores; the softmax of these is the bin distribution.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = vec![0.0; self.n_bins];
        scores_into(&self.weights, &self.biases, self.dim, x, &mut out);
        Ok(out)
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.logits(x)?;
        softmax_in_place(&mut s);
        Ok(s)
    }
}

fn scores_into(weights: &[f64], biases: &[f64], dim: usize, x: &[f64], out: &mut [f64]) {
    let n = out.len();
    out[n - 1] = 0.0;
    let mut acc = 0.0;
    for j in (0..n - 1).rev() {
        let row = &weights[j * dim..(j + 1) * dim];
        let a: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + biases[j];
        acc += a;
        out[j] = acc;
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(v: &mut [f64]) {
    let lse = log_sum_exp(v);
    for s in v.iter_mut() {
        *s = (*s - lse).exp();
    }
}

/// Log-likelihood of a learner-visible label: the log mass of the event bin
/// when uncensored, the log tail mass from the censor bin otherwise.
pub fn log_likelihood(params: &MtlrParams, inst: &SurvivalInstance, bins: &TimeBins) -> Result<f64> {
    if bins.n() != params.n_bins {
        return Err(Error::Shape(format!("{} bins against a {}-bin model", bins.n(), params.n_bins)));
    }
    let s = params.logits(&inst.x)?;
    let bin = bins.bin_of(inst.t_obs);
    Ok(label_log_likelihood(&s, bin, inst.is_censored()))
}

fn label_log_likelihood(scores: &[f64], bin: usize, censored: bool) -> f64 {
    let total = log_sum_exp(scores);
    if censored {
        log_sum_exp(&scores[bin..]) - total
    } else {
        scores[bin] - total
    }
}

/// Compact training view of a dataset.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub n_bins: usize,
    pub dim: usize,
    pub x: Vec<f64>,
    pub bin: Vec<usize>,
    pub censored: Vec<bool>,
}

impl TrainingSet {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut x = Vec::with_capacity(ds.len() * ds.dim());
        let mut bin = Vec::with_capacity(ds.len());
        let mut censored = Vec::with_capacity(ds.len());
        for inst in &ds.instances {
            x.extend_from_slice(&inst.x);
            bin.push(ds.bins.bin_of(inst.t_obs));
            censored.push(inst.is_censored());
        }
        Self {
            n_bins: ds.bins.n(),
            dim: ds.dim(),
            x,
            bin,
            censored,
        }
    }

    pub fn len(&self) -> usize {
        self.bin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bin.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Total log-likelihood at flat parameters `theta`, accumulating its
    /// gradient into `grad`.
    pub fn log_likelihood_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (n, d) = (self.n_bins, self.dim);
        let split = (n - 1) * d;
        let (w, b) = theta.split_at(split);
        let mut scores = vec![0.0; n];
        let mut ds = vec![0.0; n];
        let mut total = 0.0;
        for i in 0..self.len() {
            let x = self.row(i);
            scores_into(w, b, d, x, &mut scores);
            let bin = self.bin[i];
            let lse_all = log_sum_exp(&scores);
            // d log p / d s_r = q_r 1{r in target} - p_r
            if self.censored[i] {
                let lse_tail = log_sum_exp(&scores[bin..]);
                total += lse_tail - lse_all;
                for r in 0..n {
                    let p = (scores[r] - lse_all).exp();
                    let q = if r >= bin { (scores[r] - lse_tail).exp() } else { 0.0 };
                    ds[r] = q - p;
                }
            } else {
                total += scores[bin] - lse_all;
                for r in 0..n {
                    ds[r] = f64::from(u8::from(r == bin)) - (scores[r] - lse_all).exp();
                }
            }
            // s_r depends on a_j for every j >= r
            let mut da = 0.0;
            for j in 0..n - 1 {
                da += ds[j];
                let g = &mut grad[j * d..(j + 1) * d];
                for (gk, xk) in g.iter_mut().zip(x) {
                    *gk += da * xk;
                }
                grad[split + j] += da;
            }
        }
        total
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let mut scratch = vec![0.0; theta.len()];
        self.log_likelihood_grad(theta, &mut scratch)
    }
}

/// Prior over every flattened parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Gaussian { sigma: f64 },
    /// Two-component Gaussian mixture; its KL term is estimated with the same
    /// reparameterized draw as the likelihood.
    SpikeSlab {
        spike_weight: f64,
        spike_sigma: f64,
        slab_sigma: f64,
    },
}

impl Default for Prior {
    fn default() -> Self {
        Prior::Gaussian { sigma: 1.0 }
    }
}

/// `KL(N(mu_q, sig_q^2) || N(mu_p, sig_p^2))` summed over coordinates.
pub fn kl_diag_gaussians(mu_q: &[f64], sig_q: &[f64], mu_p: &[f64], sig_p: &[f64]) -> f64 {
    mu_q.iter()
        .zip(sig_q)
        .zip(mu_p.iter().zip(sig_p))
        .map(|((mq, sq), (mp, sp))| {
            (sp / sq).ln() + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5
        })
        .sum()
}

fn normal_log_pdf(x: f64, sigma: f64) -> f64 {
    -0.5 * (x / sigma).powi(2) - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior {
    pub n_bins: usize,
    #[serde(rename = "feature_dim")]
    pub dim: usize,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub seed: u64,
}

impl VariationalPosterior {
    pub fn new(n_bins: usize, dim: usize, init_log_sigma: f64, seed: u64) -> Self {
        let p = n_params(n_bins, dim);
        Self {
            n_bins,
            dim,
            mu: vec![0.0; p],
            log_sigma: vec![init_log_sigma; p],
            seed,
        }
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    pub fn mean_params(&self) -> MtlrParams {
        MtlrParams::from_flat(self.n_bins, self.dim, &self.mu).expect("posterior shape")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let q: Self = serde_json::from_str(&text)?;
        if q.mu.len() != n_params(q.n_bins, q.dim) || q.log_sigma.len() != q.mu.len() {
            return Err(Error::Shape("checkpoint parameter length mismatch".into()));
        }
        Ok(q)
    }
}

/// Reparameterized ELBO estimate for fixed standard-normal draws `noise`
/// (each of parameter length), with gradients w.r.t. `mu` and `log_sigma`.
#[derive(Debug, Clone)]
pub struct ElboGrad {
    pub elbo: f64,
    pub grad_mu: Vec<f64>,
    pub grad_log_sigma: Vec<f64>,
}

pub fn elbo_with_grad(q: &VariationalPosterior, data: &TrainingSet, prior: &Prior, noise: &[Vec<f64>]) -> ElboGrad {
    let p = q.mu.len();
    let sigma = q.sigma();
    let mut grad_mu = vec![0.0; p];
    let mut grad_ls = vec![0.0; p];
    let mut elbo = 0.0;
    let m = noise.len() as f64;
    let mut theta = vec![0.0; p];
    let mut g = vec![0.0; p];
    for eps in noise {
        for k in 0..p {
            theta[k] = q.mu[k] + sigma[k] * eps[k];
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        elbo += data.log_likelihood_grad(&theta, &mut g) / m;
        if let Prior::SpikeSlab { spike_weight, spike_sigma, slab_sigma } = *prior {
            // -KL ~= H[q] + log p(theta); entropy handled below
            for k in 0..p {
                let la = spike_weight.ln() + normal_log_pdf(theta[k], spike_sigma);
                let lb = (1.0 - spike_weight).ln() + normal_log_pdf(theta[k], slab_sigma);
                let lt = log_sum_exp(&[la, lb]);
                elbo += lt / m;
                let (ra, rb) = ((la - lt).exp(), (lb - lt).exp());
                g[k] += -theta[k] * (ra / (spike_sigma * spike_sigma) + rb / (slab_sigma * slab_sigma));
            }
        }
        for k in 0..p {
            grad_mu[k] += g[k] / m;
            grad_ls[k] += g[k] * sigma[k] * eps[k] / m;
        }
    }
    match *prior {
        Prior::Gaussian { sigma: sp } => {
            let zeros = vec![0.0; p];
            let sp_vec = vec![sp; p];
            elbo -= kl_diag_gaussians(&q.mu, &sigma, &zeros, &sp_vec);
            for k in 0..p {
                grad_mu[k] -= q.mu[k] / (sp * sp);
                grad_ls[k] -= sigma[k] * sigma[k] / (sp * sp) - 1.0;
            }
        }
        Prior::SpikeSlab { .. } => {
            let half_log_2pie = 0.5 * (2.0 * PI * E).ln();
            for k in 0..p {
                elbo += q.log_sigma[k] + half_log_2pie;
                grad_ls[k] += 1.0;
            }
        }
    }
    ElboGrad {
        elbo,
        grad_mu,
        grad_log_sigma: grad_ls,
    }
}

pub fn draw_noise(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..len).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub prior: Prior,
    /// Reparameterized draws per gradient step.
    pub mc_samples: usize,
    pub init_log_sigma: f64,
    /// Evaluate the ELBO with frozen noise every this many epochs (0 = never).
    pub eval_every: usize,
    pub eval_samples: usize,
    #[serde(skip)]
    pub time_limit: Option<Duration>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            learning_rate: 1e-2,
            prior: Prior::default(),
            mc_samples: 1,
            init_log_sigma: (0.1f64).ln(),
            eval_every: 0,
            eval_samples: 8,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub posterior: VariationalPosterior,
    /// `(epoch, elbo)` pairs evaluated with a frozen noise set.
    pub elbo_trace: Vec<(usize, f64)>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        }
    }

    /// Ascent step on `params` along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            params[k] += self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

const EVAL_SALT: u64 = 0xe1b0;

pub fn fit(ds: &Dataset, cfg: &FitConfig, seed: u64) -> Result<VariationalPosterior> {
    fit_traced(ds, cfg, seed).map(|r| r.posterior)
}

/// Maximizes the ELBO by full-batch Adam on `(mu, log_sigma)`.
pub fn fit_traced(ds: &Dataset, cfg: &FitConfig, seed: u64) -> Result<FitReport> {
    if ds.is_empty() {
        return Err(Error::Validation("cannot fit on an empty pool".into()));
    }
    if cfg.mc_samples == 0 {
        return Err(Error::Config("mc_samples must be at least 1".into()));
    }
    let data = TrainingSet::from_dataset(ds);
    let mut q = VariationalPosterior::new(data.n_bins, data.dim, cfg.init_log_sigma, seed);
    let p = q.mu.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval_noise = {
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ EVAL_SALT);
        draw_noise(&mut r, cfg.eval_samples.max(1), p)
    };
    let mut trace = Vec::new();
    let record = |q: &VariationalPosterior, epoch: usize, trace: &mut Vec<(usize, f64)>| {
        trace.push((epoch, elbo_with_grad(q, &data, &cfg.prior, &eval_noise).elbo));
    };
    if cfg.eval_every > 0 {
        record(&q, 0, &mut trace);
    }
    let mut adam_mu = Adam::new(p, cfg.learning_rate);
    let mut adam_ls = Adam::new(p, cfg.learning_rate);
    let started = Instant::now();
    for epoch in 1..=cfg.epochs {
        let noise = draw_noise(&mut rng, cfg.mc_samples, p);
        let g = elbo_with_grad(&q, &data, &cfg.prior, &noise);
        if !g.elbo.is_finite() || g.grad_mu.iter().chain(&g.grad_log_sigma).any(|v| !v.is_finite()) {
            let max_mu = q.mu.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let max_ls = q.log_sigma.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            return Err(Error::Diverged {
                epoch,
                detail: format!("elbo {}, max |mu| {max_mu:.3e}, max log sigma {max_ls:.3}", g.elbo),
            });
        }
        adam_mu.step(&mut q.mu, &g.grad_mu);
        adam_ls.step(&mut q.log_sigma, &g.grad_log_sigma);
        if cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            record(&q, epoch, &mut trace);
        }
        if let Some(limit) = cfg.time_limit {
            if started.elapsed() > limit {
                return Err(Error::Timeout { epoch });
            }
        }
    }
    Ok(FitReport {
        posterior: q,
        elbo_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSampleSet {
    pub samples: Vec<MtlrParams>,
    pub seed: u64,
}

impl PosteriorSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `omega_j = mu + sigma * eps_j` with standard-normal `eps_j`.
pub fn sample_posterior(q: &VariationalPosterior, count: usize, seed: u64) -> Result<PosteriorSampleSet> {
    if count == 0 {
        return Err(Error::Config("need at least one posterior sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = q.sigma();
    let samples = (0..count)
        .map(|_| {
            let flat: Vec<f64> = q
                .mu
                .iter()
                .zip(&sigma)
                .map(|(m, s)| m + s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>();
            MtlrParams::from_flat(q.n_bins, q.dim, &flat)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSampleSet { samples, seed })
}

/// Bin probabilities indexed `[instance][sample][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinProbTensor {
    pub n_instances: usize,
    pub n_samples: usize,
    pub n_bins: usize,
    pub probs: Vec<f64>,
    /// Log-softmax scores, same layout.
    pub log_probs: Vec<f64>,
}

impl BinProbTensor {
    fn offset(&self, instance: usize, sample: usize) -> usize {
        (instance * self.n_samples + sample) * self.n_bins
    }

    pub fn row(&self, instance: usize, sample: usize) -> &[f64] {
        let o = self.offset(instance, sample);
        &self.probs[o..o + self.n_bins]
    }

    pub fn log_row(&self, instance: usize, sample: usize) -> &[f64] {
        let o = self.offset(instance, sample);
        &self.log_probs[o..o + self.n_bins]
    }

    /// Mean over posterior samples.
    pub fn mean_row(&self, instance: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        for s in 0..self.n_samples {
            for (o, p) in out.iter_mut().zip(self.row(instance, s)) {
                *o += p;
            }
        }
        out.iter_mut().for_each(|v| *v /= self.n_samples as f64);
        out
    }
}

/// Survival at the start of each bin: `S_j = sum_{r >= j} p_r`.
pub fn survival_at_bin_starts(row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    let mut acc = 0.0;
    for j in (0..row.len()).rev() {
        acc += row[j];
        out[j] = acc;
    }
    out
}

pub fn predict(samples: &PosteriorSampleSet, xs: &[&[f64]], bins: &TimeBins) -> Result<BinProbTensor> {
    let first = samples
        .samples
        .first()
        .ok_or_else(|| Error::Config("empty posterior sample set".into()))?;
    let n = first.n_bins;
    if bins.n() != n {
        return Err(Error::Shape(format!("{} bins against a {n}-bin model", bins.n())));
    }
    for x in xs {
        first.check(x)?;
    }
    let s_post = samples.len();
    let mut log_probs = vec![0.0; xs.len() * s_post * n];
    log_probs
        .par_chunks_mut(s_post * n)
        .zip(xs.par_iter())
        .for_each(|(block, x)| {
            for (s, params) in samples.samples.iter().enumerate() {
                let out = &mut block[s * n..(s + 1) * n];
                scores_into(&params.weights, &params.biases, params.dim, x, out);
                let lse = log_sum_exp(out);
                out.iter_mut().for_each(|v| *v -= lse);
            }
        });
    let probs = log_probs.iter().map(|l| l.exp()).collect();
    Ok(BinProbTensor {
        n_instances: xs.len(),
        n_samples: s_post,
        n_bins: n,
        probs,
        log_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_params(rng: &mut ChaCha8Rng, n: usize, d: usize) -> MtlrParams {
        let flat: Vec<f64> = (0..n_params(n, d)).map(|_| rng.random_range(-1.5..1.5)).collect();
        MtlrParams::from_flat(n, d, &flat).unwrap()
    }

    #[test]
    fn zero_params_are_uniform() {
        let p = MtlrParams::zeros(5, 3).probs(&[0.3, -1.0, 2.0]).unwrap();
        for v in p {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn two_bins_is_logistic() {
        let params = MtlrParams::from_flat(2, 1, &[0.7, -0.2]).unwrap();
        let s: f64 = 0.7 * 1.3 - 0.2;
        let p = params.probs(&[1.3]).unwrap();
        let sigmoid = 1.0 / (1.0 + (-s).exp());
        assert!((p[0] - sigmoid).abs() < 1e-15);
        assert!((p[1] - (1.0 - sigmoid)).abs() < 1e-15);
    }

    /// Enumerates every 0/1 threshold sequence, keeps the monotone ones (the
    /// event happens at one bin and stays), and normalizes.
    fn sequence_oracle(params: &MtlrParams, x: &[f64]) -> Vec<f64> {
        let n = params.n_bins;
        let d = params.dim;
        let a: Vec<f64> = (0..n - 1)
            .map(|j| (0..d).map(|k| params.weights[j * d + k] * x[k]).sum::<f64>() + params.biases[j])
            .collect();
        let mut weights = vec![0.0; n];
        for mask in 0u32..(1 << (n - 1)) {
            let y: Vec<u32> = (0..n - 1).map(|j| (mask >> j) & 1).collect();
            // valid sequences: 0...0 1...1 (event by threshold j)
            if y.windows(2).any(|w| w[0] > w[1]) {
                continue;
            }
            let bin = y.iter().position(|&v| v == 1).unwrap_or(n - 1);
            // potential: thresholds already passed by the event contribute a_j
            let score: f64 = (0..n - 1).filter(|&j| y[j] == 1).map(|j| a[j]).sum();
            weights[bin] = score.exp();
        }
        let z: f64 = weights.iter().sum();
        weights.iter().map(|w| w / z).collect()
    }

    #[test]
    fn probabilities_match_sequence_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let params = random_params(&mut rng, 5, 3);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = params.probs(&x).unwrap();
            let want = sequence_oracle(&params, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        assert!(matches!(MtlrParams::zeros(4, 2).logits(&[1.0]), Err(Error::Shape(_))));
        assert!(MtlrParams::from_flat(4, 2, &[0.0; 5]).is_err());
    }

    #[test]
    fn log_likelihood_reads_rows() {
        // scores giving p = [0.2, 0.3, 0.5]
        let p = [0.2f64, 0.3, 0.5];
        let s: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        assert!((label_log_likelihood(&s, 1, false) - 0.3f64.ln()).abs() < 1e-12);
        assert!((label_log_likelihood(&s, 1, true) - 0.8f64.ln()).abs() < 1e-12);
        assert!((label_log_likelihood(&s, 2, true) - 0.5f64.ln()).abs() < 1e-12);
        assert!(label_log_likelihood(&s, 1, true) >= label_log_likelihood(&s, 1, false));
    }

    #[test]
    fn log_likelihood_via_instance() {
        let bins = TimeBins::new(vec![1.0, 2.0]).unwrap();
        let params = MtlrParams::zeros(3, 1);
        let mut inst = SurvivalInstance::observed(0, vec![1.0], 1.5, true, 1.0);
        let ll = log_likelihood(&params, &inst, &bins).unwrap();
        assert!((ll - (1.0f64 / 3.0).ln()).abs() < 1e-12);
        inst.delta_obs = false;
        let ll = log_likelihood(&params, &inst, &bins).unwrap();
        assert!((ll - (2.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let (mq, sq, mp, sp) = (
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..1.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..1.5),
            );
            // trapezoid over +-12 sigma_q
            let lo = mq - 12.0 * sq;
            let hi = mq + 12.0 * sq;
            let steps = 200_000;
            let h = (hi - lo) / steps as f64;
            let mut acc = 0.0;
            for i in 0..=steps {
                let x = lo + i as f64 * h;
                let (lq, lp) = (normal_log_pdf(x - mq, sq), normal_log_pdf(x - mp, sp));
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                acc += w * lq.exp() * (lq - lp);
            }
            let numeric = acc * h;
            let closed = kl_diag_gaussians(&[mq], &[sq], &[mp], &[sp]);
            assert!((numeric - closed).abs() < 1e-7, "{numeric} vs {closed}");
        }
    }

    fn toy_problem() -> (TrainingSet, VariationalPosterior, Vec<Vec<f64>>) {
        let data = TrainingSet {
            n_bins: 4,
            dim: 2,
            x: vec![0.5, -1.0, 1.2, 0.3, -0.7, 0.9],
            bin: vec![1, 3, 0],
            censored: vec![false, true, true],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = n_params(4, 2);
        let q = VariationalPosterior {
            n_bins: 4,
            dim: 2,
            mu: (0..p).map(|_| rng.random_range(-0.5..0.5)).collect(),
            log_sigma: (0..p).map(|_| rng.random_range(-2.0..-0.5)).collect(),
            seed: 0,
        };
        let noise = draw_noise(&mut rng, 2, p);
        (data, q, noise)
    }

    fn check_gradient(prior: Prior) {
        let (data, q, noise) = toy_problem();
        let g = elbo_with_grad(&q, &data, &prior, &noise);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..q.mu.len() {
            for which in 0..2 {
                let eval = |delta: f64| {
                    let mut qq = q.clone();
                    if which == 0 {
                        qq.mu[k] += delta;
                    } else {
                        qq.log_sigma[k] += delta;
                    }
                    elbo_with_grad(&qq, &data, &prior, &noise).elbo
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = if which == 0 { g.grad_mu[k] } else { g.grad_log_sigma[k] };
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        check_gradient(Prior::Gaussian { sigma: 1.0 });
        check_gradient(Prior::SpikeSlab {
            spike_weight: 0.5,
            spike_sigma: 0.1,
            slab_sigma: 2.0,
        });
    }

    #[test]
    fn sampling_collapses_and_is_deterministic() {
        let mut q = VariationalPosterior::new(3, 2, -700.0, 0);
        q.mu = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let s = sample_posterior(&q, 5, 3).unwrap();
        for p in &s.samples {
            assert_eq!(p.to_flat(), q.mu);
        }
        let q = VariationalPosterior::new(3, 2, 0.0, 0);
        assert_eq!(sample_posterior(&q, 4, 9).unwrap(), sample_posterior(&q, 4, 9).unwrap());
    }

    #[test]
    fn sample_mean_within_clt_band() {
        let mut q = VariationalPosterior::new(2, 1, 0.0, 0);
        q.mu = vec![0.5, -1.0];
        q.log_sigma = vec![(0.3f64).ln(), (2.0f64).ln()];
        let draws = 100_000;
        let s = sample_posterior(&q, draws, 17).unwrap();
        for k in 0..2 {
            let mean: f64 = s.samples.iter().map(|p| p.to_flat()[k]).sum::<f64>() / draws as f64;
            let se = q.log_sigma[k].exp() / (draws as f64).sqrt();
            assert!((mean - q.mu[k]).abs() < 3.0 * se, "coord {k}: {mean}");
        }
    }

    #[test]
    fn predicted_rows_are_simplices_with_monotone_isd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = PosteriorSampleSet {
            samples: (0..6).map(|_| random_params(&mut rng, 5, 3)).collect(),
            seed: 0,
        };
        let xs: Vec<Vec<f64>> = (0..10).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let bins = TimeBins::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = predict(&samples, &refs, &bins).unwrap();
        for i in 0..10 {
            for s in 0..6 {
                let row = t.row(i, s);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p >= 0.0));
                let isd = survival_at_bin_starts(row);
                assert!(isd.windows(2).all(|w| w[0] >= w[1]));
                assert_eq!(row, samples.samples[s].probs(&xs[i]).unwrap().as_slice());
            }
        }
    }

    #[test]
    fn isd_of_worked_row() {
        let isd = survival_at_bin_starts(&[0.20, 0.25, 0.20, 0.05, 0.30]);
        assert!((isd[1] - 0.80).abs() < 1e-12);
        assert!((isd[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let q = VariationalPosterior::new(3, 2, -1.0, 12);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        q.save_json(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("feature_dim") && text.contains("n_bins") && text.contains("log_sigma"));
        assert_eq!(VariationalPosterior::load_json(&path).unwrap(), q);
    }
}
