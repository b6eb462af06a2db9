//! Censoring-aware rewrites of a bin distribution.
//!
//! `p_cens` conditions on survival past the censor bin. `p_final` keeps only
//! the bins a probe of depth `k` from censor time `c` can resolve (those
//! meeting `[c, c + k]`) and merges everything after them into one
//! unknowable class.

use serde::{Deserialize, Serialize};

use crate::data::TimeBins;
use crate::error::{Error, Result};
use crate::mtlr::log_sum_exp;

/// Tail mass below which conditioning on survival is undefined.
pub const MIN_TAIL_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredProbRow {
    /// Full-length row, zero before `censor_bin`.
    pub probs: Vec<f64>,
    pub censor_bin: usize,
}

impl CensoredProbRow {
    /// Probabilities of the bins that can still hold the event.
    pub fn support(&self) -> &[f64] {
        &self.probs[self.censor_bin..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassLabel {
    Bin(usize),
    Unknowable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowableProbRow {
    pub probs: Vec<f64>,
    pub class_map: Vec<ClassLabel>,
}

fn check_simplex(row: &[f64]) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("row is not a probability simplex (sum {sum})")));
    }
    Ok(())
}

/// Zeroes the bins before `censor_bin` and renormalizes the rest.
pub fn to_p_cens(row: &[f64], censor_bin: usize) -> Result<CensoredProbRow> {
    check_simplex(row)?;
    if censor_bin >= row.len() {
        return Err(Error::Validation(format!("censor bin {censor_bin} outside {} bins", row.len())));
    }
    if row[..censor_bin].iter().all(|&p| p == 0.0) {
        return Ok(CensoredProbRow {
            probs: row.to_vec(),
            censor_bin,
        });
    }
    let tail: f64 = row[censor_bin..].iter().sum();
    if tail < MIN_TAIL_MASS {
        return Err(Error::DegenerateRow {
            censor_bin,
            tail_mass: tail,
        });
    }
    let probs = row
        .iter()
        .enumerate()
        .map(|(r, &p)| if r < censor_bin { 0.0 } else { p / tail })
        .collect();
    Ok(CensoredProbRow { probs, censor_bin })
}

/// `p_cens` computed from log-probabilities (or unnormalized scores); never
/// degenerate.
pub fn p_cens_from_log(log_row: &[f64], censor_bin: usize) -> CensoredProbRow {
    let lse = log_sum_exp(&log_row[censor_bin..]);
    let probs = log_row
        .iter()
        .enumerate()
        .map(|(r, &l)| if r < censor_bin { 0.0 } else { (l - lse).exp() })
        .collect();
    CensoredProbRow { probs, censor_bin }
}

/// Collapses the bins after the one containing `censor_time + depth` into a
/// single unknowable class.
pub fn to_p_final(row: &CensoredProbRow, censor_time: f64, depth: f64, bins: &TimeBins) -> KnowableProbRow {
    let n = row.probs.len();
    let horizon = bins.bin_of(censor_time + depth).max(row.censor_bin).min(n - 1);
    let mut probs: Vec<f64> = row.probs[row.censor_bin..=horizon].to_vec();
    let mut class_map: Vec<ClassLabel> = (row.censor_bin..=horizon).map(ClassLabel::Bin).collect();
    if horizon < n - 1 {
        probs.push(row.probs[horizon + 1..].iter().sum());
        class_map.push(ClassLabel::Unknowable);
    }
    KnowableProbRow { probs, class_map }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG_ROW: [f64; 5] = [0.20, 0.25, 0.20, 0.05, 0.30];

    fn five_bins() -> TimeBins {
        TimeBins::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn worked_p_cens() {
        let c = to_p_cens(&FIG_ROW, 1).unwrap();
        let want = [0.0, 0.3125, 0.25, 0.0625, 0.375];
        for (g, w) in c.probs.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn worked_p_final() {
        let c = to_p_cens(&FIG_ROW, 1).unwrap();
        let f = to_p_final(&c, 1.3, 1.0, &five_bins());
        assert_eq!(f.class_map, vec![ClassLabel::Bin(1), ClassLabel::Bin(2), ClassLabel::Unknowable]);
        assert!((f.probs[0] - 0.3125).abs() < 1e-12);
        assert!((f.probs[1] - 0.25).abs() < 1e-12);
        assert!((f.probs[2] - 0.4375).abs() < 1e-12);
        // retained bins keep their p_cens values exactly
        assert_eq!(f.probs[0], c.probs[1]);
        assert_eq!(f.probs[1], c.probs[2]);
    }

    #[test]
    fn first_bin_and_idempotence() {
        assert_eq!(to_p_cens(&FIG_ROW, 0).unwrap().probs, FIG_ROW.to_vec());
        let once = to_p_cens(&FIG_ROW, 2).unwrap();
        let twice = to_p_cens(&once.probs, 2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn degenerate_tail() {
        let row = [0.5, 0.5, 0.0];
        assert!(matches!(to_p_cens(&row, 2), Err(Error::DegenerateRow { censor_bin: 2, .. })));
        assert!(to_p_cens(&[0.5, 0.4], 0).is_err());
    }

    #[test]
    fn saturating_depth_is_p_cens() {
        let c = to_p_cens(&FIG_ROW, 1).unwrap();
        let f = to_p_final(&c, 1.3, 50.0, &five_bins());
        assert_eq!(f.probs, c.support().to_vec());
        assert!(f.class_map.iter().all(|l| matches!(l, ClassLabel::Bin(_))));
    }

    #[test]
    fn uniform_ten_bins() {
        // hand renormalization: 7 surviving bins of 1/10 each -> 1/7
        let bins = TimeBins::new((1..10).map(f64::from).collect()).unwrap();
        let row = [0.1; 10];
        let c = to_p_cens(&row, 3).unwrap();
        let f = to_p_final(&c, 3.5, 2.0, &bins);
        assert_eq!(f.class_map.len(), 4);
        for p in &f.probs[..3] {
            assert!((p - 1.0 / 7.0).abs() < 1e-12);
        }
        assert!((f.probs[3] - 4.0 / 7.0).abs() < 1e-12);
        assert!((f.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_route_agrees() {
        let logs: Vec<f64> = FIG_ROW.iter().map(|p| p.ln()).collect();
        let a = p_cens_from_log(&logs, 1);
        let b = to_p_cens(&FIG_ROW, 1).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
