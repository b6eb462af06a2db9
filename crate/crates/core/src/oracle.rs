//! Simulated probing oracle with a finite probe depth and a budget ledger.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SurvivalInstance};
use crate::error::{Error, Result};

/// Relative slack for floating-point cost sums that land on the budget.
const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    total: f64,
    spent: f64,
}

impl BudgetLedger {
    pub fn new(total: f64) -> Result<Self> {
        if !(total >= 0.0) || !total.is_finite() {
            return Err(Error::Validation(format!("budget must be finite and non-negative, got {total}")));
        }
        Ok(Self { total, spent: 0.0 })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.spent
    }

    pub fn can_afford(&self, cost: f64) -> bool {
        self.spent + cost <= self.total + BUDGET_SLACK * self.total.max(1.0)
    }

    /// Debits `cost`, or fails without touching the ledger.
    pub fn charge(&mut self, cost: f64) -> Result<()> {
        if !(cost >= 0.0) {
            return Err(Error::Validation(format!("cost must be non-negative, got {cost}")));
        }
        if !self.can_afford(cost) {
            return Err(Error::BudgetExceeded {
                requested: cost,
                remaining: self.remaining(),
            });
        }
        self.spent = (self.spent + cost).min(self.total);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub id: usize,
    pub t_old: f64,
    pub t_new: f64,
    pub delta_new: bool,
    pub cost_charged: f64,
    pub spent_after: f64,
    /// The instance was already uncensored; nothing was learned.
    pub already_observed: bool,
}

/// One line of the JSON-lines probe transcript.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: usize,
    pub t_old: f64,
    pub t_new: f64,
    pub delta_new: bool,
    pub cost: f64,
    pub spent_after: f64,
}

impl From<&ProbeResult> for AuditRecord {
    fn from(r: &ProbeResult) -> Self {
        Self {
            id: r.id,
            t_old: r.t_old,
            t_new: r.t_new,
            delta_new: r.delta_new,
            cost: r.cost_charged,
            spent_after: r.spent_after,
        }
    }
}

/// Reveals up to `depth` more years of follow-up:
/// `t_new = min(t_obs + depth, t_true)`, with the event flag set only when the
/// true horizon is reached and the ground truth is an event. The instance cost
/// is charged even when the instance is already uncensored.
pub fn probe(inst: &mut SurvivalInstance, depth: f64, ledger: &mut BudgetLedger) -> Result<ProbeResult> {
    if !(depth >= 0.0) {
        return Err(Error::Validation(format!("probe depth must be non-negative, got {depth}")));
    }
    ledger.charge(inst.cost)?;
    let t_old = inst.t_obs;
    let already_observed = inst.delta_obs;
    if !already_observed {
        let t_new = (inst.t_obs + depth).min(inst.t_true);
        inst.t_obs = t_new;
        inst.delta_obs = t_new == inst.t_true && inst.delta_true;
    }
    Ok(ProbeResult {
        id: inst.id,
        t_old,
        t_new: inst.t_obs,
        delta_new: inst.delta_obs,
        cost_charged: inst.cost,
        spent_after: ledger.spent(),
        already_observed,
    })
}

/// Probes the instances at `positions` in one round. The batch is rejected as a
/// whole if it repeats a position or does not fit the remaining budget.
pub fn probe_batch(
    positions: &[usize],
    ds: &mut Dataset,
    depth: f64,
    ledger: &mut BudgetLedger,
) -> Result<Vec<ProbeResult>> {
    let mut seen = BTreeSet::new();
    for &p in positions {
        if p >= ds.len() {
            return Err(Error::Validation(format!("position {p} outside pool of {}", ds.len())));
        }
        if !seen.insert(p) {
            return Err(Error::DuplicateProbe(p));
        }
    }
    let total: f64 = positions.iter().map(|&p| ds.instances[p].cost).sum();
    if !ledger.can_afford(total) {
        return Err(Error::BudgetExceeded {
            requested: total,
            remaining: ledger.remaining(),
        });
    }
    positions
        .iter()
        .map(|&p| probe(&mut ds.instances[p], depth, ledger))
        .collect()
}

pub fn write_audit<W: Write>(results: &[ProbeResult], mut out: W) -> Result<()> {
    for r in results {
        serde_json::to_writer(&mut out, &AuditRecord::from(r))?;
        out.write_all(b"\n").map_err(|e| Error::io("<audit log>", e))?;
    }
    Ok(())
}
