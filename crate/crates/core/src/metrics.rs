//! Survival evaluation metrics.
//!
//! Every metric reads the learner-visible labels (`t_obs`, `delta_obs`) of
//! the test instances. Point predictions are ISD medians.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{quantile_sorted, SurvivalInstance, TimeBins};
use crate::error::{Error, Result};
use crate::mtlr::{survival_at_bin_starts, BinProbTensor};

/// Lower clamp for censoring-survival weights in the Brier score.
pub const CENSOR_WEIGHT_FLOOR: f64 = 1e-3;
pub const IBS_GRID_POINTS: usize = 100;

/// Right-continuous product-limit step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// `surv[i] = S(times[i])`.
    pub surv: Vec<f64>,
}

impl KmCurve {
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 1.0,
            k => self.surv[k - 1],
        }
    }

    /// `S(t-)`.
    pub fn eval_before(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x < t) {
            0 => 1.0,
            k => self.surv[k - 1],
        }
    }

    /// `integral_0^tau S(t) dt`.
    pub fn restricted_mean(&self, tau: f64) -> f64 {
        let mut area = 0.0;
        let mut prev_t = 0.0;
        let mut prev_s = 1.0;
        for (&t, &s) in self.times.iter().zip(&self.surv) {
            if t >= tau {
                break;
            }
            area += prev_s * (t - prev_t);
            prev_t = t;
            prev_s = s;
        }
        area + prev_s * (tau - prev_t).max(0.0)
    }
}

pub fn km_fit(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    if times.is_empty() || times.len() != events.len() {
        return Err(Error::Validation("Kaplan-Meier needs matching, non-empty times and events".into()));
    }
    if times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::Validation("negative or NaN survival time".into()));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk = times.len();
    let mut s = 1.0;
    let mut curve = KmCurve { times: Vec::new(), surv: Vec::new() };
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let (mut deaths, mut leaving) = (0usize, 0usize);
        while k < order.len() && times[order[k]] == t {
            deaths += usize::from(events[order[k]]);
            leaving += 1;
            k += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            curve.times.push(t);
            curve.surv.push(s);
        }
        at_risk -= leaving;
    }
    Ok(curve)
}

fn labels(test: &[SurvivalInstance]) -> (Vec<f64>, Vec<bool>) {
    (test.iter().map(|i| i.t_obs).collect(), test.iter().map(|i| i.delta_obs).collect())
}

/// Survival at `t` from a bin row: exact at bin starts, linear inside a bin,
/// reaching 0 at the nominal end of the last bin.
pub fn isd_at(row: &[f64], bins: &TimeBins, t: f64) -> f64 {
    isd_from_starts(&survival_at_bin_starts(row), bins, t)
}

fn isd_from_starts(starts: &[f64], bins: &TimeBins, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let j = bins.bin_of(t);
    let lo = bins.lower(j);
    let hi = bins.nominal_upper(j);
    if t >= hi {
        return 0.0;
    }
    let next = starts.get(j + 1).copied().unwrap_or(0.0);
    starts[j] + (next - starts[j]) * (t - lo) / (hi - lo)
}

/// Median of the ISD.
pub fn predict_time(row: &[f64], bins: &TimeBins) -> f64 {
    let starts = survival_at_bin_starts(row);
    let n = starts.len();
    for j in 0..n {
        let s0 = starts[j];
        let s1 = starts.get(j + 1).copied().unwrap_or(0.0);
        if s1 == 0.5 {
            return bins.nominal_upper(j);
        }
        if s0 >= 0.5 && s1 < 0.5 {
            let (lo, hi) = (bins.lower(j), bins.nominal_upper(j));
            return lo + (s0 - 0.5) / (s0 - s1) * (hi - lo);
        }
    }
    bins.midpoint(n - 1)
}

/// Jackknife pseudo-observations of the restricted mean survival time for
/// the censored instances (`None` for events), clamped at 0.
pub fn pseudo_observations(test: &[SurvivalInstance]) -> Result<Vec<Option<f64>>> {
    let (times, events) = labels(test);
    let n = test.len();
    if events.iter().all(|&e| e) {
        return Ok(vec![None; n]);
    }
    if n < 2 {
        return Err(Error::UndefinedMetric(
            "pseudo-observation needs at least two test instances".into(),
        ));
    }
    let tau = times.iter().copied().fold(0.0, f64::max);
    let theta = km_fit(&times, &events)?.restricted_mean(tau);
    let mut out = vec![None; n];
    let mut t_minus = Vec::with_capacity(n - 1);
    let mut e_minus = Vec::with_capacity(n - 1);
    for i in 0..n {
        if events[i] {
            continue;
        }
        t_minus.clear();
        e_minus.clear();
        for k in (0..n).filter(|&k| k != i) {
            t_minus.push(times[k]);
            e_minus.push(events[k]);
        }
        let loo = km_fit(&t_minus, &e_minus)?.restricted_mean(tau);
        out[i] = Some((n as f64 * theta - (n - 1) as f64 * loo).max(0.0));
    }
    Ok(out)
}

/// MAE against event times and pseudo-observations for censored instances.
pub fn mae_po_with(preds: &[f64], test: &[SurvivalInstance], pseudo: &[Option<f64>]) -> Result<f64> {
    if preds.len() != test.len() || pseudo.len() != test.len() || test.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} test instances", preds.len(), test.len())));
    }
    let total: f64 = test
        .iter()
        .zip(preds)
        .zip(pseudo)
        .map(|((inst, p), po)| (po.unwrap_or(inst.t_obs) - p).abs())
        .sum();
    Ok(total / test.len() as f64)
}

pub fn mae_po(preds: &[f64], test: &[SurvivalInstance]) -> Result<f64> {
    mae_po_with(preds, test, &pseudo_observations(test)?)
}

pub fn mae_uncensored(preds: &[f64], test: &[SurvivalInstance]) -> Result<f64> {
    if preds.len() != test.len() {
        return Err(Error::Shape(format!("{} predictions for {} test instances", preds.len(), test.len())));
    }
    let errs: Vec<f64> = test
        .iter()
        .zip(preds)
        .filter(|(i, _)| i.delta_obs)
        .map(|(i, p)| (i.t_obs - p).abs())
        .collect();
    if errs.is_empty() {
        return Err(Error::UndefinedMetric("no uncensored test instances".into()));
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Harrell's concordance over pairs whose earlier member is an event.
pub fn c_index(preds: &[f64], test: &[SurvivalInstance]) -> Result<f64> {
    if preds.len() != test.len() {
        return Err(Error::Shape(format!("{} predictions for {} test instances", preds.len(), test.len())));
    }
    let (mut score, mut pairs) = (0.0, 0usize);
    for (i, a) in test.iter().enumerate() {
        if !a.delta_obs {
            continue;
        }
        for (j, b) in test.iter().enumerate() {
            if a.t_obs < b.t_obs {
                pairs += 1;
                if preds[i] < preds[j] {
                    score += 1.0;
                } else if preds[i] == preds[j] {
                    score += 0.5;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::UndefinedMetric("no comparable pairs".into()));
    }
    Ok(score / pairs as f64)
}

/// `IBS_GRID_POINTS` equally spaced times from 0 to the 95th percentile of
/// the observed test times.
pub fn ibs_grid(test: &[SurvivalInstance]) -> Vec<f64> {
    let mut t: Vec<f64> = test.iter().map(|i| i.t_obs).collect();
    t.sort_by(f64::total_cmp);
    let hi = if t.is_empty() { 0.0 } else { quantile_sorted(&t, 0.95) };
    (0..IBS_GRID_POINTS)
        .map(|g| hi * g as f64 / (IBS_GRID_POINTS - 1) as f64)
        .collect()
}

/// Inverse-probability-of-censoring weighted Brier score at each grid time,
/// averaged by the trapezoid rule. `surv[i][g]` is instance `i`'s predicted
/// survival at `grid[g]`.
pub fn integrated_brier(surv: &[Vec<f64>], grid: &[f64], test: &[SurvivalInstance]) -> Result<f64> {
    if surv.len() != test.len() || test.is_empty() {
        return Err(Error::Shape(format!("{} curves for {} test instances", surv.len(), test.len())));
    }
    if grid.len() < 2 || surv.iter().any(|s| s.len() != grid.len()) {
        return Err(Error::Shape("Brier grid needs at least two points per curve".into()));
    }
    let span = grid[grid.len() - 1] - grid[0];
    if !(span > 0.0) {
        return Err(Error::UndefinedMetric("Brier grid has zero width".into()));
    }
    let (times, events) = labels(test);
    let censored: Vec<bool> = events.iter().map(|e| !e).collect();
    let g = km_fit(&times, &censored)?;
    let n = test.len() as f64;
    let bs: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let g_t = g.eval(t).max(CENSOR_WEIGHT_FLOOR);
            test.iter()
                .zip(surv)
                .map(|(inst, s)| {
                    let s = s[k];
                    if inst.t_obs <= t && inst.delta_obs {
                        s * s / g.eval_before(inst.t_obs).max(CENSOR_WEIGHT_FLOOR)
                    } else if inst.t_obs > t {
                        (1.0 - s) * (1.0 - s) / g_t
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / n
        })
        .collect();
    let area: f64 = grid
        .windows(2)
        .zip(bs.windows(2))
        .map(|(t, b)| 0.5 * (b[0] + b[1]) * (t[1] - t[0]))
        .sum();
    Ok(area / span)
}

/// `1.96 * sd / sqrt(m)` with the sample standard deviation.
pub fn ci95(values: &[f64]) -> Result<f64> {
    let m = values.len();
    if m < 2 {
        return Err(Error::UndefinedMetric(format!("confidence interval needs 2 values, got {m}")));
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    Ok(1.96 * var.sqrt() / (m as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
    /// One-sided p-value for `mean(a) < mean(b)`.
    pub p_less: f64,
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::UndefinedMetric("t-test needs two values per sample".into()));
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var / n, n)
    };
    let (ma, va, na) = stats(a);
    let (mb, vb, nb) = stats(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let (p2, pl) = match ma.total_cmp(&mb) {
            std::cmp::Ordering::Equal => (1.0, 0.5),
            std::cmp::Ordering::Less => (0.0, 0.0),
            std::cmp::Ordering::Greater => (0.0, 1.0),
        };
        return Ok(TTest { t: 0.0, df: na + nb - 2.0, p_two_sided: p2, p_less: pl });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::UndefinedMetric(e.to_string()))?;
    Ok(TTest {
        t,
        df,
        p_two_sided: 2.0 * dist.cdf(-t.abs()),
        p_less: dist.cdf(t),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValues {
    pub mae_po: f64,
    pub mae_uncensored: f64,
    pub c_index: f64,
    pub ibs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae_po: f64,
    pub mae_uncensored: f64,
    pub c_index: f64,
    pub ibs: f64,
    /// Half-widths across posterior prediction repetitions.
    pub ci95: MetricValues,
}

/// Metrics of one set of per-instance bin rows.
pub fn evaluate_rows(
    rows: &[&[f64]],
    bins: &TimeBins,
    test: &[SurvivalInstance],
    pseudo: &[Option<f64>],
    grid: &[f64],
) -> Result<MetricValues> {
    let preds: Vec<f64> = rows.iter().map(|r| predict_time(r, bins)).collect();
    let surv: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let starts = survival_at_bin_starts(r);
            grid.iter().map(|&t| isd_from_starts(&starts, bins, t)).collect()
        })
        .collect();
    Ok(MetricValues {
        mae_po: mae_po_with(&preds, test, pseudo)?,
        mae_uncensored: mae_uncensored(&preds, test)?,
        c_index: c_index(&preds, test)?,
        ibs: integrated_brier(&surv, grid, test)?,
    })
}

/// Evaluates every posterior sample of `tensor` (rows follow `test`) and
/// reports the mean and 95% half-width of each metric.
pub fn evaluate(tensor: &BinProbTensor, bins: &TimeBins, test: &[SurvivalInstance]) -> Result<MetricReport> {
    if tensor.n_instances != test.len() {
        return Err(Error::Shape(format!(
            "{} predicted instances for {} test instances",
            tensor.n_instances,
            test.len()
        )));
    }
    let pseudo = pseudo_observations(test)?;
    let grid = ibs_grid(test);
    let per_sample: Vec<MetricValues> = (0..tensor.n_samples)
        .map(|s| {
            let rows: Vec<&[f64]> = (0..test.len()).map(|i| tensor.row(i, s)).collect();
            evaluate_rows(&rows, bins, test, &pseudo, &grid)
        })
        .collect::<Result<_>>()?;
    let column = |f: fn(&MetricValues) -> f64| -> (f64, f64) {
        let v: Vec<f64> = per_sample.iter().map(f).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (mean, ci95(&v).unwrap_or(0.0))
    };
    let (mae_po, h_po) = column(|m| m.mae_po);
    let (mae_uncensored, h_unc) = column(|m| m.mae_uncensored);
    let (c_index, h_c) = column(|m| m.c_index);
    let (ibs, h_ibs) = column(|m| m.ibs);
    Ok(MetricReport {
        mae_po,
        mae_uncensored,
        c_index,
        ibs,
        ci95: MetricValues {
            mae_po: h_po,
            mae_uncensored: h_unc,
            c_index: h_c,
            ibs: h_ibs,
        },
    })
}
