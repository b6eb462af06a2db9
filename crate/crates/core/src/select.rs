//! Budget-constrained batch construction.
//!
//! [`greedy_ratio`] adds, at every step, the affordable candidate with the
//! largest marginal gain per unit cost and finally compares the batch with
//! the best affordable singleton. [`greedy_enumerated`] is the partial
//! enumeration variant for budgeted maximum coverage: best set below size `z`
//! by brute force versus every feasible size-`z` seed completed greedily.
//! [`brute_force_optimal`] and [`check_submodular`] are exhaustive checkers
//! for small instances.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack for cost sums that land on the budget.
const COST_SLACK: f64 = 1e-9;

/// Default cap on pool size for the enumerated greedy.
pub const ENUMERATION_LIMIT: usize = 25;

/// Default cap on the number of sets for exhaustive search.
pub const BRUTE_FORCE_LIMIT: usize = 20;

fn fits(spent: f64, cost: f64, budget: f64) -> bool {
    spent + cost <= budget + COST_SLACK * budget.max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Chosen candidates in the order they were added.
    pub batch: Vec<usize>,
    pub total_cost: f64,
    /// Set-function value of `batch`.
    pub value: f64,
    /// `(candidate, gain / cost)` for each greedy step.
    pub score_trace: Vec<(usize, f64)>,
}

impl SelectionResult {
    pub fn empty() -> Self {
        Self {
            batch: Vec::new(),
            total_cost: 0.0,
            value: 0.0,
            score_trace: Vec::new(),
        }
    }
}

/// One row of the acquisition trace: every candidate considered at a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub candidate_id: usize,
    pub marginal_gain_bits: f64,
    pub cost: f64,
    pub ratio: f64,
    pub chosen: bool,
}

pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

/// Incremental access to a set function over candidates `0..len()`.
pub trait MarginalOracle: Sync {
    fn len(&self) -> usize;

    /// `f(A + {candidate}) - f(A)` for the committed set `A`.
    fn gain(&self, candidate: usize) -> f64;

    fn commit(&mut self, candidate: usize) -> Result<()>;

    /// `f(A)` for the committed set.
    fn value(&self) -> f64;
}

/// Wraps a plain set function; each gain re-evaluates `f`.
pub struct SetFunctionOracle<F> {
    f: F,
    n: usize,
    current: Vec<usize>,
    value: f64,
}

impl<F: Fn(&[usize]) -> f64 + Sync> SetFunctionOracle<F> {
    pub fn new(n: usize, f: F) -> Self {
        let value = f(&[]);
        Self {
            f,
            n,
            current: Vec::new(),
            value,
        }
    }
}

impl<F: Fn(&[usize]) -> f64 + Sync> MarginalOracle for SetFunctionOracle<F> {
    fn len(&self) -> usize {
        self.n
    }

    fn gain(&self, candidate: usize) -> f64 {
        let mut s = self.current.clone();
        s.push(candidate);
        (self.f)(&s) - self.value
    }

    fn commit(&mut self, candidate: usize) -> Result<()> {
        self.current.push(candidate);
        self.value = (self.f)(&self.current);
        Ok(())
    }

    fn value(&self) -> f64 {
        self.value
    }
}

fn validate_costs(costs: &[f64], budget: f64) -> Result<()> {
    if !(budget >= 0.0) {
        return Err(Error::Validation(format!("budget must be non-negative, got {budget}")));
    }
    if let Some(c) = costs.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
        return Err(Error::Validation(format!("costs must be positive and finite, got {c}")));
    }
    Ok(())
}

/// Cost-ratio greedy with the best-affordable-singleton safeguard.
///
/// Ties go to the lowest candidate index. When `trace` is given, every
/// affordable candidate of every step is recorded.
pub fn greedy_ratio<O: MarginalOracle>(
    oracle: &mut O,
    costs: &[f64],
    budget: f64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<SelectionResult> {
    validate_costs(costs, budget)?;
    if costs.len() != oracle.len() {
        return Err(Error::Shape(format!("{} costs for {} candidates", costs.len(), oracle.len())));
    }
    let base = oracle.value();
    let mut chosen = vec![false; costs.len()];
    let mut result = SelectionResult::empty();
    result.value = base;
    let mut best_single: Option<(usize, f64)> = None;

    for step in 0.. {
        let open: Vec<usize> = (0..costs.len())
            .filter(|&i| !chosen[i] && fits(result.total_cost, costs[i], budget))
            .collect();
        if open.is_empty() {
            break;
        }
        let gains: Vec<f64> = {
            let o = &*oracle;
            open.par_iter().map(|&i| o.gain(i)).collect()
        };
        let mut pick = 0;
        for k in 1..open.len() {
            if gains[k] / costs[open[k]] > gains[pick] / costs[open[pick]] {
                pick = k;
            }
        }
        if step == 0 {
            let mut best = 0;
            for k in 1..open.len() {
                if gains[k] > gains[best] {
                    best = k;
                }
            }
            best_single = Some((open[best], base + gains[best]));
        }
        let winner = open[pick];
        if let Some(rows) = trace.as_deref_mut() {
            rows.extend(open.iter().zip(&gains).map(|(&i, &g)| TraceRow {
                step,
                candidate_id: i,
                marginal_gain_bits: g,
                cost: costs[i],
                ratio: g / costs[i],
                chosen: i == winner,
            }));
        }
        oracle.commit(winner)?;
        chosen[winner] = true;
        result.batch.push(winner);
        result.total_cost += costs[winner];
        result.score_trace.push((winner, gains[pick] / costs[winner]));
        result.value = oracle.value();
    }

    if let Some((single, value)) = best_single {
        if value > result.value {
            return Ok(SelectionResult {
                batch: vec![single],
                total_cost: costs[single],
                value,
                score_trace: result.score_trace,
            });
        }
    }
    Ok(result)
}

/// Walks a ranking and keeps every candidate that still fits the budget.
pub fn select_by_ranking(order: &[usize], costs: &[f64], budget: f64) -> Result<SelectionResult> {
    validate_costs(costs, budget)?;
    let mut result = SelectionResult::empty();
    let mut seen = vec![false; costs.len()];
    for &i in order {
        if i >= costs.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Validation(format!("ranking repeats or overruns at {i}")));
        }
        if fits(result.total_cost, costs[i], budget) {
            result.batch.push(i);
            result.total_cost += costs[i];
        }
    }
    Ok(result)
}

fn combinations(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        // rightmost position that can still move right
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustive maximum of a set function under a knapsack constraint.
pub fn brute_force_set_function(
    costs: &[f64],
    budget: f64,
    f: &(dyn Fn(&[usize]) -> f64 + Sync),
) -> Result<SelectionResult> {
    validate_costs(costs, budget)?;
    let n = costs.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { size: n, limit: BRUTE_FORCE_LIMIT });
    }
    let (value, mask) = (0u32..(1u32 << n))
        .into_par_iter()
        .filter_map(|mask| {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let cost: f64 = members.iter().map(|&i| costs[i]).sum();
            fits(0.0, cost, budget).then(|| (f(&members), mask))
        })
        .reduce(
            || (f64::NEG_INFINITY, u32::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let batch: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
    Ok(SelectionResult {
        total_cost: batch.iter().map(|&i| costs[i]).sum(),
        batch,
        value,
        score_trace: Vec::new(),
    })
}

/// Partial-enumeration greedy for a monotone set function under a budget.
pub fn enumerated_greedy(
    costs: &[f64],
    budget: f64,
    z: usize,
    f: &(dyn Fn(&[usize]) -> f64 + Sync),
) -> Result<SelectionResult> {
    validate_costs(costs, budget)?;
    if z == 0 {
        return Err(Error::Config("seed size z must be at least 1".into()));
    }
    let n = costs.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge { size: n, limit: ENUMERATION_LIMIT });
    }
    let set_cost = |s: &[usize]| s.iter().map(|&i| costs[i]).sum::<f64>();

    // H1: best feasible set with fewer than z members
    let mut h1 = (f(&[]), Vec::new());
    for size in 1..z {
        combinations(n, size, |s| {
            if fits(0.0, set_cost(s), budget) {
                let w = f(s);
                if w > h1.0 {
                    h1 = (w, s.to_vec());
                }
            }
        });
    }

    // H2: every feasible size-z seed, completed by cost-ratio greedy
    let mut seeds = Vec::new();
    combinations(n, z, |s| {
        if fits(0.0, set_cost(s), budget) {
            seeds.push(s.to_vec());
        }
    });
    let h2 = seeds
        .par_iter()
        .enumerate()
        .map(|(k, seed)| {
            let mut g = seed.clone();
            let mut cost = set_cost(&g);
            let mut w = f(&g);
            let mut open: Vec<usize> = (0..n).filter(|i| !g.contains(i)).collect();
            while !open.is_empty() {
                let mut best = 0;
                let mut best_ratio = f64::NEG_INFINITY;
                let mut best_w = w;
                for (pos, &i) in open.iter().enumerate() {
                    g.push(i);
                    let wi = f(&g);
                    g.pop();
                    let r = (wi - w) / costs[i];
                    if r > best_ratio {
                        best_ratio = r;
                        best = pos;
                        best_w = wi;
                    }
                }
                let i = open.remove(best);
                if fits(cost, costs[i], budget) {
                    g.push(i);
                    cost += costs[i];
                    w = best_w;
                }
            }
            (w, k, g)
        })
        .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });

    let (value, batch) = match h2 {
        Some((w2, _, g)) if w2 >= h1.0 => (w2, g),
        _ => h1,
    };
    Ok(SelectionResult {
        total_cost: set_cost(&batch),
        batch,
        value,
        score_trace: Vec::new(),
    })
}

/// A weighted budgeted maximum-coverage instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageInstance {
    pub weights: BTreeMap<u32, f64>,
    pub sets: Vec<CoverageSet>,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSet {
    pub elements: Vec<u32>,
    pub cost: f64,
}

impl CoverageInstance {
    pub fn validate(&self) -> Result<()> {
        if self.weights.values().any(|w| !(*w >= 0.0)) {
            return Err(Error::Validation("element weights must be non-negative".into()));
        }
        for s in &self.sets {
            if let Some(e) = s.elements.iter().find(|e| !self.weights.contains_key(e)) {
                return Err(Error::Validation(format!("element {e} has no weight")));
            }
        }
        validate_costs(&self.costs(), self.budget)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.sets.iter().map(|s| s.cost).collect()
    }

    /// Total weight of the union of the chosen sets.
    pub fn weight_of(&self, chosen: &[usize]) -> f64 {
        let mut covered = std::collections::BTreeSet::new();
        for &i in chosen {
            covered.extend(self.sets[i].elements.iter().copied());
        }
        covered.iter().map(|e| self.weights[e]).sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Incremental coverage weights over dense element indices.
pub struct CoverageOracle<'a> {
    inst: &'a CoverageInstance,
    dense: Vec<Vec<usize>>,
    dense_weight: Vec<f64>,
    covered: Vec<bool>,
    value: f64,
}

impl<'a> CoverageOracle<'a> {
    pub fn new(inst: &'a CoverageInstance) -> Self {
        let index: BTreeMap<u32, usize> = inst.weights.keys().enumerate().map(|(i, &e)| (e, i)).collect();
        let dense = inst
            .sets
            .iter()
            .map(|s| {
                let mut v: Vec<usize> = s.elements.iter().map(|e| index[e]).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        Self {
            inst,
            dense,
            dense_weight: inst.weights.values().copied().collect(),
            covered: vec![false; inst.weights.len()],
            value: 0.0,
        }
    }
}

impl MarginalOracle for CoverageOracle<'_> {
    fn len(&self) -> usize {
        self.inst.sets.len()
    }

    fn gain(&self, candidate: usize) -> f64 {
        self.dense[candidate]
            .iter()
            .filter(|&&e| !self.covered[e])
            .map(|&e| self.dense_weight[e])
            .sum()
    }

    fn commit(&mut self, candidate: usize) -> Result<()> {
        self.value += self.gain(candidate);
        for &e in &self.dense[candidate] {
            self.covered[e] = true;
        }
        Ok(())
    }

    fn value(&self) -> f64 {
        self.value
    }
}

pub fn greedy_ratio_coverage(inst: &CoverageInstance) -> Result<SelectionResult> {
    inst.validate()?;
    let mut oracle = CoverageOracle::new(inst);
    greedy_ratio(&mut oracle, &inst.costs(), inst.budget, None)
}

pub fn greedy_enumerated(inst: &CoverageInstance, z: usize) -> Result<SelectionResult> {
    inst.validate()?;
    enumerated_greedy(&inst.costs(), inst.budget, z, &|s: &[usize]| inst.weight_of(s))
}

pub fn brute_force_optimal(inst: &CoverageInstance) -> Result<SelectionResult> {
    inst.validate()?;
    brute_force_set_function(&inst.costs(), inst.budget, &|s: &[usize]| inst.weight_of(s))
}

/// Which form of the submodularity definition a witness violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// `f(A) + f(B) < f(A | B) + f(A & B)`
    Lattice,
    /// `f(A + x) - f(A) < f(B + x) - f(B)` with `A` inside `B`
    DiminishingReturns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: Violation,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub x: Option<usize>,
    /// Amount by which the inequality fails.
    pub excess: f64,
}

fn members(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

/// Exhaustively checks both forms of submodularity on a ground set of `n <= 16`
/// elements, returning the first violation beyond `tol`.
pub fn check_submodular(
    n: usize,
    f: &(dyn Fn(&[usize]) -> f64 + Sync),
    tol: f64,
) -> Result<Option<Witness>> {
    if n > 16 {
        return Err(Error::TooLarge { size: n, limit: 16 });
    }
    let full = 1usize << n;
    let table: Vec<f64> = (0..full).into_par_iter().map(|m| f(&members(m, n))).collect();

    for a in 0..full {
        for b in 0..full {
            let lhs = table[a] + table[b];
            let rhs = table[a | b] + table[a & b];
            if lhs < rhs - tol {
                return Ok(Some(Witness {
                    kind: Violation::Lattice,
                    a: members(a, n),
                    b: members(b, n),
                    x: None,
                    excess: rhs - lhs,
                }));
            }
        }
    }
    for b in 0..full {
        // every submask a of b
        let mut a = b;
        loop {
            for x in (0..n).filter(|x| b >> x & 1 == 0) {
                let bit = 1 << x;
                let da = table[a | bit] - table[a];
                let db = table[b | bit] - table[b];
                if da < db - tol {
                    return Ok(Some(Witness {
                        kind: Violation::DiminishingReturns,
                        a: members(a, n),
                        b: members(b, n),
                        x: Some(x),
                        excess: db - da,
                    }));
                }
            }
            if a == 0 {
                break;
            }
            a = (a - 1) & b;
        }
    }
    Ok(None)
}
