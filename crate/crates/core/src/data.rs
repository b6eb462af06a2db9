//! Survival data model: instances, quantile time bins, CSV ingestion,
//! artificial censoring, stratified splitting and a synthetic generator.
//!
//! Bin indices are zero-based throughout the crate: bin `0` is
//! `[0, edges[0])` and bin `n - 1` is `[edges[n - 2], inf)`.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to a feature's standard deviation before dividing.
pub const STD_FLOOR: f64 = 1e-12;

/// Default number of time bins.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalInstance {
    pub id: usize,
    pub x: Vec<f64>,
    /// Ground-truth time known only to the oracle.
    pub t_true: f64,
    pub delta_true: bool,
    /// Time the learner sees.
    pub t_obs: f64,
    pub delta_obs: bool,
    pub cost: f64,
}

impl SurvivalInstance {
    /// An instance whose learner-visible label equals its ground truth.
    pub fn observed(id: usize, x: Vec<f64>, time: f64, event: bool, cost: f64) -> Self {
        Self {
            id,
            x,
            t_true: time,
            delta_true: event,
            t_obs: time,
            delta_obs: event,
            cost,
        }
    }

    pub fn is_censored(&self) -> bool {
        !self.delta_obs
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_true >= 0.0) || !(self.t_obs >= 0.0) {
            return Err(Error::Validation(format!(
                "instance {}: negative or NaN time",
                self.id
            )));
        }
        if self.t_obs > self.t_true {
            return Err(Error::Validation(format!(
                "instance {}: observed time {} beyond true time {}",
                self.id, self.t_obs, self.t_true
            )));
        }
        if self.delta_obs && (self.t_obs != self.t_true || !self.delta_true) {
            return Err(Error::Validation(format!(
                "instance {}: observed event inconsistent with ground truth",
                self.id
            )));
        }
        if !(self.cost > 0.0) || !self.cost.is_finite() {
            return Err(Error::Validation(format!(
                "instance {}: cost must be positive, got {}",
                self.id, self.cost
            )));
        }
        Ok(())
    }
}

/// Disjoint time bins given by their interior boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBins {
    edges: Vec<f64>,
}

impl TimeBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Validation("time bins need at least one edge".into()));
        }
        if !edges.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(Error::Validation("bin edges must be finite and positive".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("bin edges must be strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    /// Interior boundaries, length `n - 1`.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Number of bins.
    pub fn n(&self) -> usize {
        self.edges.len() + 1
    }

    /// Index of the bin containing `t`. Total on `t >= 0`.
    pub fn bin_of(&self, t: f64) -> usize {
        self.edges.partition_point(|&e| e <= t)
    }

    pub fn lower(&self, bin: usize) -> f64 {
        if bin == 0 {
            0.0
        } else {
            self.edges[bin - 1]
        }
    }

    /// Upper boundary, with the open last bin closed off at a nominal end
    /// one previous-bin-width past its start.
    pub fn nominal_upper(&self, bin: usize) -> f64 {
        if bin < self.edges.len() {
            self.edges[bin]
        } else {
            let last = self.edges[self.edges.len() - 1];
            let prev = if self.edges.len() >= 2 {
                self.edges[self.edges.len() - 2]
            } else {
                0.0
            };
            last + (last - prev)
        }
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        0.5 * (self.lower(bin) + self.nominal_upper(bin))
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bins at the `j / n` quantiles of the given event times.
pub fn make_bins(event_times: &[f64], n: usize) -> Result<TimeBins> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {n}")));
    }
    let mut sorted: Vec<f64> = event_times.to_vec();
    if sorted.iter().any(|t| !t.is_finite()) {
        return Err(Error::Validation("event times must be finite".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let distinct = sorted.windows(2).filter(|w| w[0] != w[1]).count() + usize::from(!sorted.is_empty());
    if distinct < n {
        return Err(Error::DegenerateBins { distinct, bins: n });
    }
    let mut edges = Vec::with_capacity(n - 1);
    for j in 1..n {
        let mut q = quantile_sorted(&sorted, j as f64 / n as f64);
        if let Some(&prev) = edges.last() {
            if q <= prev {
                q = f64::next_up(prev);
            }
        }
        if q <= 0.0 {
            q = f64::MIN_POSITIVE;
        }
        edges.push(q);
    }
    TimeBins::new(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<SurvivalInstance>,
    pub bins: TimeBins,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        instances: Vec<SurvivalInstance>,
        bins: TimeBins,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let dim = feature_names.len();
        for inst in &instances {
            if inst.x.len() != dim {
                return Err(Error::Shape(format!(
                    "instance {} has {} features, expected {dim}",
                    inst.id,
                    inst.x.len()
                )));
            }
            inst.validate()?;
        }
        Ok(Self {
            instances,
            bins,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Positions (not ids) of the learner-visible censored instances.
    pub fn censored_positions(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.instances[i].is_censored())
            .collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.instances.iter().map(|i| i.cost).collect()
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.instances.iter().filter(|i| !i.delta_true).count() as f64 / self.len() as f64
    }
}

/// Per-column z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut count = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        // Welford
        for row in rows {
            count += 1;
            for (c, &v) in row.iter().enumerate() {
                let d = v - mean[c];
                mean[c] += d / count as f64;
                m2[c] += d * (v - mean[c]);
            }
        }
        let std = m2
            .iter()
            .map(|s| {
                if count == 0 {
                    1.0
                } else {
                    (s / count as f64).sqrt().max(STD_FLOOR)
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (c, v) in x.iter_mut().enumerate() {
            let z = (*v - self.mean[c]) / self.std[c];
            // constant columns: the centred value is rounding noise
            *v = if self.std[c] <= STD_FLOOR { 0.0 } else { z };
        }
    }

    pub fn fit_apply(instances: &mut [SurvivalInstance], dim: usize) -> Self {
        let s = Self::fit(instances.iter().map(|i| i.x.as_slice()), dim);
        for inst in instances.iter_mut() {
            s.apply(&mut inst.x);
        }
        s
    }
}

/// Column names used when reading a survival CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    pub cost: Option<String>,
    pub n_bins: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            cost: Some("cost".into()),
            n_bins: DEFAULT_BINS,
        }
    }
}

const AUDIT_TIME: &str = "t_true";
const AUDIT_EVENT: &str = "delta_true";

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|e| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("`{raw}`: {e}"),
    })
}

fn parse_bit(raw: &str, row: usize, column: &str) -> Result<bool> {
    let v = parse_cell(raw, row, column)?;
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("event indicator must be 0 or 1, got {v}"),
        })
    }
}

/// Reads a survival CSV. The cost column is used when present (a missing
/// optional cost column means uniform cost 1); `t_true`/`delta_true` audit
/// columns, if present, are restored as the ground truth. Every other column
/// is a numeric feature and is z-scored.
///
/// Bins are built from the file's event times with `min(schema.n_bins,
/// distinct event times)` bins; callers re-bin on their training split.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let time_col = find(&schema.time)
        .ok_or_else(|| Error::Schema(format!("missing time column `{}`", schema.time)))?;
    let event_col = find(&schema.event)
        .ok_or_else(|| Error::Schema(format!("missing event column `{}`", schema.event)))?;
    let cost_col = schema.cost.as_deref().and_then(find);
    let true_time_col = find(AUDIT_TIME);
    let true_event_col = find(AUDIT_EVENT);
    if true_time_col.is_some() != true_event_col.is_some() {
        return Err(Error::Schema(format!(
            "`{AUDIT_TIME}` and `{AUDIT_EVENT}` must appear together"
        )));
    }
    let reserved: BTreeSet<usize> = [Some(time_col), Some(event_col), cost_col, true_time_col, true_event_col]
        .into_iter()
        .flatten()
        .collect();
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|c| !reserved.contains(c)).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut instances = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let t_obs = parse_cell(&record[time_col], row, &schema.time)?;
        if t_obs < 0.0 || !t_obs.is_finite() {
            return Err(Error::Validation(format!("row {row}: time must be non-negative, got {t_obs}")));
        }
        let delta_obs = parse_bit(&record[event_col], row, &schema.event)?;
        let cost = match cost_col {
            Some(c) => parse_cell(&record[c], row, &headers[c])?,
            None => 1.0,
        };
        let x = feature_cols
            .iter()
            .map(|&c| parse_cell(&record[c], row, &headers[c]))
            .collect::<Result<Vec<f64>>>()?;
        let mut inst = SurvivalInstance::observed(row, x, t_obs, delta_obs, cost);
        if let (Some(tc), Some(ec)) = (true_time_col, true_event_col) {
            inst.t_true = parse_cell(&record[tc], row, AUDIT_TIME)?;
            inst.delta_true = parse_bit(&record[ec], row, AUDIT_EVENT)?;
        }
        inst.validate()?;
        instances.push(inst);
    }
    if instances.is_empty() {
        return Err(Error::Validation("csv has no data rows".into()));
    }
    let dim = feature_names.len();
    Standardizer::fit_apply(&mut instances, dim);

    let events: Vec<f64> = instances.iter().filter(|i| i.delta_true).map(|i| i.t_true).collect();
    let distinct = events.iter().map(|t| t.to_bits()).collect::<BTreeSet<_>>().len();
    let bins = make_bins(&events, schema.n_bins.min(distinct).max(2))?;
    Dataset::new(instances, bins, feature_names)
}

/// Writes the dataset with learner-visible labels as `time`/`event` plus the
/// `t_true`/`delta_true` audit columns.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "event".into(), "cost".into(), AUDIT_TIME.into(), AUDIT_EVENT.into()];
    header.extend(ds.feature_names.iter().cloned());
    w.write_record(&header)?;
    for inst in &ds.instances {
        let mut rec = vec![
            inst.t_obs.to_string(),
            u8::from(inst.delta_obs).to_string(),
            inst.cost.to_string(),
            inst.t_true.to_string(),
            u8::from(inst.delta_true).to_string(),
        ];
        rec.extend(inst.x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, file)
}

/// Pool composition after artificial censoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensorPlan {
    /// Instances with an observed event left untouched.
    pub n_uncensored: usize,
    /// Instances censored at a uniform time before their recorded time.
    pub n_censored: usize,
}

impl CensorPlan {
    /// Censors every instance except `n_uncensored` events.
    pub fn keep_events(ds: &Dataset, n_uncensored: usize) -> Self {
        Self {
            n_uncensored,
            n_censored: ds.len().saturating_sub(n_uncensored),
        }
    }
}

/// Builds a training pool of `plan.n_uncensored` untouched event instances and
/// `plan.n_censored` instances censored at `Uniform(0, t_true)`. Instances that
/// are already censored can be drawn for the censored part and are censored
/// further. The result keeps the input order.
pub fn artificial_censor(ds: &Dataset, plan: &CensorPlan, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<usize> = (0..ds.len()).filter(|&i| ds.instances[i].delta_true).collect();
    if events.len() < plan.n_uncensored {
        return Err(Error::Config(format!(
            "need {} uncensored instances but only {} events are available",
            plan.n_uncensored,
            events.len()
        )));
    }
    if plan.n_uncensored + plan.n_censored > ds.len() {
        return Err(Error::Config(format!(
            "pool of {} + {} exceeds {} available instances",
            plan.n_uncensored,
            plan.n_censored,
            ds.len()
        )));
    }
    events.shuffle(&mut rng);
    let keep: BTreeSet<usize> = events[..plan.n_uncensored].iter().copied().collect();
    let mut rest: Vec<usize> = (0..ds.len()).filter(|i| !keep.contains(i)).collect();
    rest.shuffle(&mut rng);
    let censor: BTreeSet<usize> = rest[..plan.n_censored].iter().copied().collect();

    let mut instances = Vec::with_capacity(plan.n_uncensored + plan.n_censored);
    for (i, inst) in ds.instances.iter().enumerate() {
        if keep.contains(&i) {
            let mut inst = inst.clone();
            inst.t_obs = inst.t_true;
            inst.delta_obs = true;
            instances.push(inst);
        } else if censor.contains(&i) {
            let mut inst = inst.clone();
            let u: f64 = Open01.sample(&mut rng);
            inst.t_obs = u * inst.t_true;
            inst.delta_obs = false;
            instances.push(inst);
        }
    }
    Dataset::new(instances, ds.bins.clone(), ds.feature_names.clone())
}

/// Stratified train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub n_bins: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            n_bins: DEFAULT_BINS,
        }
    }
}

/// Splits stratified on `delta_true`, re-standardizes both halves with the
/// training statistics and rebuilds bins from training event times.
pub fn split_train_test(ds: &Dataset, cfg: &SplitConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {} outside (0, 1)", cfg.test_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_idx = BTreeSet::new();
    for stratum in [true, false] {
        let mut members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.instances[i].delta_true == stratum)
            .collect();
        members.shuffle(&mut rng);
        let take = (members.len() as f64 * cfg.test_fraction).round() as usize;
        test_idx.extend(members.into_iter().take(take));
    }
    let (mut train, mut test): (Vec<_>, Vec<_>) = ds
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (test_idx.contains(&i), inst.clone()))
        .partition(|(is_test, _)| !*is_test);
    let mut train: Vec<SurvivalInstance> = train.drain(..).map(|(_, i)| i).collect();
    let mut test: Vec<SurvivalInstance> = test.drain(..).map(|(_, i)| i).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("split produced an empty side".into()));
    }
    let dim = ds.dim();
    let s = Standardizer::fit_apply(&mut train, dim);
    for inst in &mut test {
        s.apply(&mut inst.x);
    }
    let events: Vec<f64> = train.iter().filter(|i| i.delta_true).map(|i| i.t_true).collect();
    let bins = make_bins(&events, cfg.n_bins)?;
    Ok((
        Dataset::new(train, bins.clone(), ds.feature_names.clone())?,
        Dataset::new(test, bins, ds.feature_names.clone())?,
    ))
}

/// Parameters of the synthetic exponential-hazard generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    /// Event rate at `x = 0` (per year).
    pub baseline_rate: f64,
    /// Rate of the covariate-independent censoring clock; 0 disables censoring.
    pub censor_rate: f64,
    /// Standard deviation of the linear predictor `beta . x`.
    pub effect_scale: f64,
    pub n_bins: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            dim: 10,
            seed: 0,
            baseline_rate: 0.1,
            censor_rate: 0.05,
            effect_scale: 1.0,
            n_bins: DEFAULT_BINS,
        }
    }
}

impl SynthConfig {
    /// The fixed coefficient vector used by [`synth_generate`] for this seed.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ COEFFICIENT_SALT);
        let scale = self.effect_scale / (self.dim as f64).sqrt();
        (0..self.dim)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>()
    }
}

const COEFFICIENT_SALT: u64 = 0x5eed_0b37;

/// Draws covariates from a standard normal, event times from
/// `Exp(baseline_rate * exp(beta . x))` and censoring times from an
/// independent `Exp(censor_rate)`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.n == 0 || cfg.dim == 0 {
        return Err(Error::Config("synthetic dataset needs n >= 1 and dim >= 1".into()));
    }
    if !(cfg.baseline_rate > 0.0) || !(cfg.censor_rate >= 0.0) {
        return Err(Error::Config("rates must be positive (censor rate may be 0)".into()));
    }
    let beta = cfg.coefficients();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Exp::new(1.0).expect("unit exponential");
    let mut instances = Vec::with_capacity(cfg.n);
    for id in 0..cfg.n {
        let x: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eta: f64 = beta.iter().zip(&x).map(|(b, v)| b * v).sum();
        let rate = cfg.baseline_rate * eta.exp();
        let t_event = unit.sample(&mut rng) / rate;
        let t_censor = if cfg.censor_rate > 0.0 {
            unit.sample(&mut rng) / cfg.censor_rate
        } else {
            // keep the stream aligned across censor rates
            let _: f64 = unit.sample(&mut rng);
            f64::INFINITY
        };
        let event = t_event <= t_censor;
        let t = if event { t_event } else { t_censor };
        instances.push(SurvivalInstance::observed(id, x, t, event, 1.0));
    }
    let events: Vec<f64> = instances.iter().filter(|i| i.delta_true).map(|i| i.t_true).collect();
    let bins = make_bins(&events, cfg.n_bins)?;
    let names = (0..cfg.dim).map(|j| format!("x{j}")).collect();
    Dataset::new(instances, bins, names)
}

/// Convenience for `rng.random::<f64>()` in `[lo, hi)`.
pub(crate) fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_bins() -> TimeBins {
        TimeBins::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn bin_of_worked_example() {
        let bins = five_bins();
        assert_eq!(bins.bin_of(1.3), 1);
        assert_eq!(bins.bin_of(0.0), 0);
        assert_eq!(bins.bin_of(1e9), 4);
        assert_eq!(bins.bin_of(1.0), 1);
        assert_eq!(bins.bin_of(f64::next_down(1.0)), 0);
    }

    #[test]
    fn deciles_and_median() {
        let times: Vec<f64> = (1..=10).map(f64::from).collect();
        let bins = make_bins(&times, 10).unwrap();
        assert_eq!(bins.n(), 10);
        for (j, e) in bins.edges().iter().enumerate() {
            let expected = 1.0 + 0.9 * (j + 1) as f64;
            assert!((e - expected).abs() < 1e-12, "{e} vs {expected}");
        }
        let bins = make_bins(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(bins.edges(), &[2.5]);
    }

    #[test]
    fn duplicate_quantiles_are_perturbed() {
        let times = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        let bins = make_bins(&times, 3).unwrap();
        assert!(bins.edges().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn too_few_distinct_times() {
        let err = make_bins(&[1.0, 1.0, 2.0], 3).unwrap_err();
        assert!(matches!(err, Error::DegenerateBins { distinct: 2, bins: 3 }));
        assert!(make_bins(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn csv_defaults_and_constant_column() {
        let text = "time,event,a,b\n1.0,1,5,0.5\n2.0,1,5,1.5\n3.0,0,5,2.5\n";
        let ds = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.costs(), vec![1.0, 1.0, 1.0]);
        assert_eq!(ds.dim(), 2);
        assert!(ds.instances.iter().all(|i| i.x[0] == 0.0));
        let b: Vec<f64> = ds.instances.iter().map(|i| i.x[1]).collect();
        assert!((b.iter().sum::<f64>()).abs() < 1e-12);
        assert!(ds.instances[2].is_censored());
        assert_eq!(ds.instances[0].t_obs, ds.instances[0].t_true);
    }

    #[test]
    fn csv_errors() {
        let schema = CsvSchema::default();
        let missing = "t,event,a\n1,1,2\n";
        assert!(matches!(read_csv(missing.as_bytes(), &schema), Err(Error::Schema(_))));
        let bad = "time,event,a\n1,1,2\n2,1,oops\n";
        match read_csv(bad.as_bytes(), &schema) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        let negative = "time,event,a\n-1,1,2\n2,1,3\n";
        assert!(matches!(read_csv(negative.as_bytes(), &schema), Err(Error::Validation(_))));
    }

    #[test]
    fn csv_with_cost_column() {
        let text = "time,event,cost,f\n1,1,0.5,1\n2,1,0.25,2\n3,1,2,3\n";
        let ds = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.costs(), vec![0.5, 0.25, 2.0]);
        assert_eq!(ds.feature_names, vec!["f".to_string()]);
    }

    #[test]
    fn censoring_respects_plan() {
        let ds = synth_generate(&SynthConfig { n: 400, dim: 3, seed: 3, ..Default::default() }).unwrap();
        let plan = CensorPlan { n_uncensored: 30, n_censored: 270 };
        let pool = artificial_censor(&ds, &plan, 11).unwrap();
        assert_eq!(pool.len(), 300);
        assert_eq!(pool.instances.iter().filter(|i| i.delta_obs).count(), 30);
        for inst in &pool.instances {
            assert!(inst.t_obs <= inst.t_true);
            if inst.is_censored() {
                assert!(inst.t_obs > 0.0 && inst.t_obs < inst.t_true);
            } else {
                assert_eq!(inst.t_obs, inst.t_true);
            }
        }
        let again = artificial_censor(&ds, &plan, 11).unwrap();
        assert_eq!(pool, again);
        let too_many = CensorPlan { n_uncensored: 10_000, n_censored: 0 };
        assert!(matches!(artificial_censor(&ds, &too_many, 1), Err(Error::Config(_))));
    }

    #[test]
    fn already_censored_instance_moves_earlier() {
        let inst = SurvivalInstance::observed(0, vec![0.0], 5.0, false, 1.0);
        let ds = Dataset::new(vec![inst], TimeBins::new(vec![1.0]).unwrap(), vec!["x".into()]).unwrap();
        let pool = artificial_censor(&ds, &CensorPlan { n_uncensored: 0, n_censored: 1 }, 0).unwrap();
        let p = &pool.instances[0];
        assert!(p.t_obs > 0.0 && p.t_obs < 5.0);
        assert!(!p.delta_obs && !p.delta_true);
    }

    #[test]
    fn synth_without_censoring_has_all_events() {
        let ds = synth_generate(&SynthConfig { n: 200, dim: 2, censor_rate: 0.0, ..Default::default() }).unwrap();
        assert!(ds.instances.iter().all(|i| i.delta_true));
    }

    #[test]
    fn split_is_stratified_and_standardized() {
        let ds = synth_generate(&SynthConfig { n: 1000, dim: 4, seed: 9, ..Default::default() }).unwrap();
        let (train, test) = split_train_test(&ds, &SplitConfig::default(), 5).unwrap();
        assert_eq!(train.len() + test.len(), 1000);
        assert!((train.censored_fraction() - test.censored_fraction()).abs() < 0.02);
        let s = Standardizer::fit(train.instances.iter().map(|i| i.x.as_slice()), 4);
        for c in 0..4 {
            assert!(s.mean[c].abs() < 1e-9);
            assert!((s.std[c] - 1.0).abs() < 1e-6);
        }
        assert_eq!(train.bins, test.bins);
        assert_eq!(train.bins.n(), 10);
    }
}
