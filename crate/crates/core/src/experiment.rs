//! Experiment runner: split, censor, fit, acquire, probe, refit, evaluate.
//!
//! Each seed gets one train/test split, one censored pool and one base
//! model. Every (method, budget) cell starts from that pristine pool, so a
//! cell that probes nothing reproduces the base model exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{select, AcquisitionParams, Method};
use crate::data::{
    artificial_censor, load_csv, split_train_test, synth_generate, uniform, CensorPlan, CsvSchema, Dataset,
    SplitConfig, SynthConfig, DEFAULT_BINS,
};
use crate::error::{Error, Result};
use crate::metrics::{ci95, evaluate, welch_t_test, MetricReport};
use crate::mtlr::{fit, predict, sample_posterior, FitConfig, VariationalPosterior};
use crate::oracle::{probe_batch, AuditRecord, BudgetLedger};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostMode {
    Uniform,
    Random { lo: f64, hi: f64 },
    Scaled { factor: f64 },
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostMode::Uniform => write!(f, "uniform"),
            CostMode::Random { lo, hi } => write!(f, "random({lo},{hi})"),
            CostMode::Scaled { factor } => write!(f, "scaled({factor})"),
        }
    }
}

/// `Uniform` sets every cost to 1, `Random` draws i.i.d. `U(lo, hi)`,
/// `Scaled` multiplies the current costs.
pub fn assign_costs(ds: &Dataset, mode: &CostMode, seed: u64) -> Result<Dataset> {
    let mut out = ds.clone();
    match *mode {
        CostMode::Uniform => out.instances.iter_mut().for_each(|i| i.cost = 1.0),
        CostMode::Random { lo, hi } => {
            if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
                return Err(Error::Validation(format!("random costs need 0 < lo <= hi, got ({lo}, {hi})")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            out.instances.iter_mut().for_each(|i| i.cost = uniform(&mut rng, lo, hi));
        }
        CostMode::Scaled { factor } => {
            if !(factor > 0.0) || !factor.is_finite() {
                return Err(Error::Validation(format!("cost factor must be positive, got {factor}")));
            }
            out.instances.iter_mut().for_each(|i| i.cost *= factor);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `synthetic` or a CSV path (relative paths resolve against the config
    /// file's directory).
    pub dataset: String,
    /// Label used in reports; defaults to the file stem.
    pub dataset_name: Option<String>,
    pub csv: CsvSchema,
    pub synthetic: SynthConfig,
    pub n_uncensored: usize,
    pub n_censored: usize,
    pub budgets: Vec<f64>,
    pub probe_depth: f64,
    pub cost_mode: CostMode,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Fixes the split, artificial censoring and costs across seeds; seeds
    /// then vary only the model fit, posterior draws and acquisition.
    pub data_seed: Option<u64>,
    pub n_bins: usize,
    /// Posterior samples used for acquisition.
    pub s_post: usize,
    /// Posterior samples used for evaluation.
    pub eval_samples: usize,
    pub epochs: usize,
    pub test_fraction: f64,
    pub fit: FitConfig,
    pub acquisition: AcquisitionParams,
    /// Wall-clock cap per cell; cells over it are recorded as timeouts.
    pub cell_timeout_secs: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "synthetic".into(),
            dataset_name: None,
            csv: CsvSchema::default(),
            synthetic: SynthConfig {
                n: 1500,
                ..SynthConfig::default()
            },
            n_uncensored: 100,
            n_censored: 900,
            budgets: vec![0.0, 1.0, 5.0, 10.0, 15.0, 20.0],
            probe_depth: 1.0,
            cost_mode: CostMode::Uniform,
            methods: Method::ALL.to_vec(),
            seeds: (0..10).collect(),
            data_seed: None,
            n_bins: DEFAULT_BINS,
            s_post: 50,
            eval_samples: 40,
            epochs: 5000,
            test_fraction: 0.3,
            fit: FitConfig::default(),
            acquisition: AcquisitionParams::default(),
            cell_timeout_secs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves a relative dataset path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if !cfg.is_synthetic() && Path::new(&cfg.dataset).is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.budgets.is_empty() || self.budgets.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return bad("budgets must be a non-empty list of finite values >= 0");
        }
        if !(self.probe_depth >= 0.0) {
            return bad("probe_depth must be >= 0");
        }
        if self.n_bins < 2 {
            return bad("n_bins must be at least 2");
        }
        if self.s_post == 0 || self.eval_samples == 0 || self.epochs == 0 {
            return bad("s_post, eval_samples and epochs must be positive");
        }
        if let Some(t) = self.cell_timeout_secs {
            if !(t > 0.0) {
                return bad("cell_timeout_secs must be positive");
            }
        }
        Ok(())
    }

    pub fn is_synthetic(&self) -> bool {
        self.dataset.eq_ignore_ascii_case("synthetic")
    }

    pub fn dataset_label(&self) -> String {
        if let Some(name) = &self.dataset_name {
            return name.clone();
        }
        if self.is_synthetic() {
            return "synthetic".into();
        }
        Path::new(&self.dataset)
            .file_stem()
            .map_or_else(|| self.dataset.clone(), |s| s.to_string_lossy().into_owned())
    }

    fn load_dataset(&self) -> Result<Dataset> {
        if self.is_synthetic() {
            synth_generate(&SynthConfig {
                n_bins: self.n_bins,
                ..self.synthetic
            })
        } else {
            load_csv(&self.dataset, &CsvSchema { n_bins: self.n_bins, ..self.csv.clone() })
        }
    }
}

/// Stream keys; every random choice in a cell derives from one of these.
mod stream {
    pub const SPLIT: u64 = 1;
    pub const CENSOR: u64 = 2;
    pub const COSTS: u64 = 3;
    pub const FIT: u64 = 4;
    pub const ACQUIRE_SAMPLES: u64 = 5;
    pub const EVAL_SAMPLES: u64 = 6;
    pub const ACQUIRE: u64 = 7;

    /// splitmix64 finalizer over `seed` and `key`.
    pub fn derive(seed: u64, key: u64) -> u64 {
        let mut z = seed ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
    Timeout,
}

/// One (method, budget, seed) outcome. Metric columns are empty for cells
/// that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub dataset: String,
    pub budget: f64,
    pub probe_depth: f64,
    pub cost_mode: String,
    pub seed: u64,
    pub mae_po: Option<f64>,
    pub mae_unc: Option<f64>,
    pub cindex: Option<f64>,
    pub ibs: Option<f64>,
    pub status: CellStatus,
    pub spent: f64,
    pub probed: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Probe transcript of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAudit {
    pub method: Method,
    pub budget: f64,
    pub seed: u64,
    pub records: Vec<AuditRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub audits: Vec<CellAudit>,
    /// Full metric report of each row in `table`, `None` where the cell failed.
    pub reports: Vec<Option<MetricReport>>,
}

impl ExperimentOutput {
    pub fn all_completed(&self) -> bool {
        self.table.rows.iter().all(|r| r.status == CellStatus::Ok)
    }
}

struct SeedContext {
    pool: Dataset,
    test: Dataset,
    base: VariationalPosterior,
}

fn fit_config(cfg: &ExperimentConfig, limit: Option<Duration>) -> FitConfig {
    FitConfig {
        epochs: cfg.epochs,
        time_limit: limit,
        ..cfg.fit.clone()
    }
}

fn prepare_seed(cfg: &ExperimentConfig, full: &Dataset, seed: u64) -> Result<SeedContext> {
    let data = cfg.data_seed.unwrap_or(seed);
    let split = SplitConfig {
        test_fraction: cfg.test_fraction,
        n_bins: cfg.n_bins,
    };
    let (train, test) = split_train_test(full, &split, stream::derive(data, stream::SPLIT))?;
    let plan = CensorPlan {
        n_uncensored: cfg.n_uncensored,
        n_censored: cfg.n_censored,
    };
    let pool = artificial_censor(&train, &plan, stream::derive(data, stream::CENSOR))?;
    let pool = assign_costs(&pool, &cfg.cost_mode, stream::derive(data, stream::COSTS))?;
    let base = fit(&pool, &fit_config(cfg, None), stream::derive(seed, stream::FIT))?;
    Ok(SeedContext { pool, test, base })
}

struct CellOutcome {
    report: MetricReport,
    spent: f64,
    records: Vec<AuditRecord>,
}

fn method_key(method: Method) -> u64 {
    Method::ALL.iter().position(|&m| m == method).expect("listed method") as u64
}

fn run_cell(cfg: &ExperimentConfig, ctx: &SeedContext, method: Method, budget: f64, seed: u64) -> Result<CellOutcome> {
    let started = Instant::now();
    let cap = cfg.cell_timeout_secs.map(Duration::from_secs_f64);
    let params = AcquisitionParams {
        probe_depth: cfg.probe_depth,
        ..cfg.acquisition
    };
    let samples = sample_posterior(&ctx.base, cfg.s_post, stream::derive(seed, stream::ACQUIRE_SAMPLES))?;
    let acquire_seed = stream::derive(
        stream::derive(stream::derive(seed, stream::ACQUIRE), method_key(method)),
        budget.to_bits(),
    );
    let selection = select(method, &ctx.pool, &samples, budget, &params, acquire_seed, None)?;
    let remaining = match cap {
        Some(c) => Some(c.checked_sub(started.elapsed()).ok_or(Error::Timeout { epoch: 0 })?),
        None => None,
    };

    let mut pool = ctx.pool.clone();
    let mut ledger = BudgetLedger::new(budget)?;
    let probes = probe_batch(&selection.batch, &mut pool, cfg.probe_depth, &mut ledger)?;
    let posterior = if probes.is_empty() {
        ctx.base.clone()
    } else {
        fit(&pool, &fit_config(cfg, remaining), stream::derive(seed, stream::FIT))?
    };

    let eval = sample_posterior(&posterior, cfg.eval_samples, stream::derive(seed, stream::EVAL_SAMPLES))?;
    let xs: Vec<&[f64]> = ctx.test.instances.iter().map(|i| i.x.as_slice()).collect();
    let tensor = predict(&eval, &xs, &ctx.test.bins)?;
    let report = evaluate(&tensor, &ctx.test.bins, &ctx.test.instances)?;
    Ok(CellOutcome {
        report,
        spent: ledger.spent(),
        records: probes.iter().map(AuditRecord::from).collect(),
    })
}

/// Runs every (method, budget, seed) cell. Only configuration and dataset
/// loading errors abort the run; cell errors are recorded in their rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let full = cfg.load_dataset()?;
    let label = cfg.dataset_label();
    let cost_mode = cfg.cost_mode.to_string();

    let contexts: Vec<(u64, std::result::Result<SeedContext, String>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| (seed, prepare_seed(cfg, &full, seed).map_err(|e| e.to_string())))
        .collect();

    let mut cells = Vec::new();
    for (k, _) in contexts.iter().enumerate() {
        for &method in &cfg.methods {
            for &budget in &cfg.budgets {
                cells.push((k, method, budget));
            }
        }
    }

    let outcomes: Vec<(ResultRow, Option<(CellAudit, MetricReport)>)> = cells
        .par_iter()
        .map(|&(k, method, budget)| {
            let (seed, ctx) = &contexts[k];
            let mut row = ResultRow {
                method,
                dataset: label.clone(),
                budget,
                probe_depth: cfg.probe_depth,
                cost_mode: cost_mode.clone(),
                seed: *seed,
                mae_po: None,
                mae_unc: None,
                cindex: None,
                ibs: None,
                status: CellStatus::Failed,
                spent: 0.0,
                probed: 0,
                error: None,
            };
            let ctx = match ctx {
                Ok(c) => c,
                Err(e) => {
                    row.error = Some(e.clone());
                    return (row, None);
                }
            };
            match run_cell(cfg, ctx, method, budget, *seed) {
                Ok(out) => {
                    row.mae_po = Some(out.report.mae_po);
                    row.mae_unc = Some(out.report.mae_uncensored);
                    row.cindex = Some(out.report.c_index);
                    row.ibs = Some(out.report.ibs);
                    row.status = CellStatus::Ok;
                    row.spent = out.spent;
                    row.probed = out.records.len();
                    let audit = CellAudit {
                        method,
                        budget,
                        seed: *seed,
                        records: out.records,
                    };
                    (row, Some((audit, out.report)))
                }
                Err(e) => {
                    if matches!(e, Error::Timeout { .. }) {
                        row.status = CellStatus::Timeout;
                    }
                    row.error = Some(e.to_string());
                    (row, None)
                }
            }
        })
        .collect();

    let (rows, extras): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let (audits, reports): (Vec<_>, Vec<_>) = extras
        .into_iter()
        .map(|e| match e {
            Some((a, r)) => (Some(a), Some(r)),
            None => (None, None),
        })
        .unzip();
    Ok(ExperimentOutput {
        table: ResultTable { rows },
        audits: audits.into_iter().flatten().collect(),
        reports,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

pub fn write_results_csv<W: Write>(table: &ResultTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &table.rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<results writer>", e))?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(reader: R) -> Result<ResultTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(ResultTable { rows })
}

pub fn read_results_json<R: std::io::Read>(reader: R) -> Result<ResultTable> {
    Ok(serde_json::from_reader(reader)?)
}

/// Reads a table written by [`emit_report`] in CSV or JSON, chosen by
/// extension.
pub fn load_results(path: impl AsRef<Path>) -> Result<ResultTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_results_json(file),
        Some("csv") => read_results_csv(file),
        _ => Err(Error::Config(format!("cannot tell the format of {}", path.display()))),
    }
}

/// Per-key aggregate over seeds of the completed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub budget: f64,
    pub probe_depth: f64,
    pub cost_mode: String,
    pub n: usize,
    pub mae_po: f64,
    pub mae_po_ci95: f64,
    pub mae_unc: f64,
    pub cindex: f64,
    pub ibs: f64,
}

type GroupKey = (String, u64, u64);

fn group_key(r: &ResultRow) -> GroupKey {
    (r.cost_mode.clone(), r.probe_depth.to_bits(), r.budget.to_bits())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// MAE-PO values by method for one (cost mode, depth, budget) key.
fn mae_by_method(table: &ResultTable) -> BTreeMap<GroupKey, BTreeMap<Method, Vec<f64>>> {
    let mut out: BTreeMap<GroupKey, BTreeMap<Method, Vec<f64>>> = BTreeMap::new();
    for r in &table.rows {
        let entry = out.entry(group_key(r)).or_default().entry(r.method).or_default();
        if let Some(v) = r.mae_po {
            entry.push(v);
        }
    }
    out
}

pub fn summarize(table: &ResultTable) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(GroupKey, Method), Vec<&ResultRow>> = BTreeMap::new();
    for r in table.rows.iter().filter(|r| r.status == CellStatus::Ok) {
        groups.entry((group_key(r), r.method)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rows| {
            let col = |f: fn(&ResultRow) -> Option<f64>| -> Vec<f64> { rows.iter().filter_map(|r| f(r)).collect() };
            let po = col(|r| r.mae_po);
            SummaryRow {
                method: rows[0].method,
                budget: rows[0].budget,
                probe_depth: rows[0].probe_depth,
                cost_mode: rows[0].cost_mode.clone(),
                n: rows.len(),
                mae_po: mean(&po),
                mae_po_ci95: ci95(&po).unwrap_or(0.0),
                mae_unc: mean(&col(|r| r.mae_unc)),
                cindex: mean(&col(|r| r.cindex)),
                ibs: mean(&col(|r| r.ibs)),
            }
        })
        .collect()
}

/// Methods whose MAE-PO is the lowest mean or not significantly different
/// from it (two-sided Welch test, p >= 0.05).
pub fn bold_methods(values: &BTreeMap<Method, Vec<f64>>) -> Vec<Method> {
    let Some((&best, best_vals)) = values
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .min_by(|a, b| mean(a.1).total_cmp(&mean(b.1)))
    else {
        return Vec::new();
    };
    values
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .filter(|(&m, v)| {
            m == best
                || match welch_t_test(best_vals, v) {
                    Ok(t) => t.p_two_sided >= 0.05,
                    Err(_) => mean(v) == mean(best_vals),
                }
        })
        .map(|(&m, _)| m)
        .collect()
}

fn write_markdown<W: Write>(table: &ResultTable, mut w: W) -> std::io::Result<()> {
    let mut methods: Vec<Method> = table.rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let by_key = mae_by_method(table);
    let dataset = table.rows.first().map_or("", |r| r.dataset.as_str());
    writeln!(w, "# Results: {dataset}\n")?;
    writeln!(
        w,
        "MAE-PO mean ± 95% CI over seeds. Bold: lowest mean and methods not significantly different from it (Welch t-test, p < 0.05).\n"
    )?;
    let mut current: Option<(String, u64)> = None;
    for ((cost, depth, budget), per_method) in &by_key {
        if current.as_ref() != Some(&(cost.clone(), *depth)) {
            current = Some((cost.clone(), *depth));
            writeln!(w, "\n## cost {cost}, probe depth {}\n", f64::from_bits(*depth))?;
            write!(w, "| budget |")?;
            for m in &methods {
                write!(w, " {m} |")?;
            }
            writeln!(w)?;
            write!(w, "|---|")?;
            for _ in &methods {
                write!(w, "---|")?;
            }
            writeln!(w)?;
        }
        let bold = bold_methods(per_method);
        write!(w, "| {} |", f64::from_bits(*budget))?;
        for m in &methods {
            match per_method.get(m).filter(|v| !v.is_empty()) {
                Some(v) => {
                    let cell = match ci95(v) {
                        Ok(h) => format!("{:.3} ± {:.3}", mean(v), h),
                        Err(_) => format!("{:.3}", mean(v)),
                    };
                    if bold.contains(m) {
                        write!(w, " **{cell}** |")?;
                    } else {
                        write!(w, " {cell} |")?;
                    }
                }
                None => write!(w, " n/a |")?,
            }
        }
        writeln!(w)?;
    }
    let failed: Vec<&ResultRow> = table.rows.iter().filter(|r| r.status != CellStatus::Ok).collect();
    if !failed.is_empty() {
        writeln!(w, "\n## Incomplete cells\n")?;
        writeln!(w, "| method | budget | seed | status | error |")?;
        writeln!(w, "|---|---|---|---|---|")?;
        for r in failed {
            let status = match r.status {
                CellStatus::Timeout => "timeout",
                _ => "failed",
            };
            let msg = r.error.as_deref().unwrap_or("").replace('|', "\\|");
            writeln!(w, "| {} | {} | {} | {status} | {msg} |", r.method, r.budget, r.seed)?;
        }
    }
    Ok(())
}

pub fn emit_report<W: Write>(table: &ResultTable, format: ReportFormat, mut writer: W) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Validation("empty result table".into()));
    }
    match format {
        ReportFormat::Csv => write_results_csv(table, writer),
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, table)?;
            writer.write_all(b"\n").map_err(|e| Error::io("<report writer>", e))
        }
        ReportFormat::Markdown => write_markdown(table, writer).map_err(|e| Error::io("<report writer>", e)),
    }
}

/// Writes `results.{csv,json,md}` and `probes.jsonl` into `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown] {
        let path = dir.join(format!("results.{}", format.extension()));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        emit_report(&out.table, format, std::io::BufWriter::new(file))?;
        written.push(path);
    }
    let path = dir.join("probes.jsonl");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    for audit in &out.audits {
        serde_json::to_writer(&mut file, audit)?;
        file.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    file.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, seed: u64, mae: f64) -> ResultRow {
        ResultRow {
            method,
            dataset: "toy".into(),
            budget: 5.0,
            probe_depth: 1.0,
            cost_mode: "uniform".into(),
            seed,
            mae_po: Some(mae),
            mae_unc: Some(mae * 0.9),
            cindex: Some(0.7),
            ibs: Some(0.1),
            status: CellStatus::Ok,
            spent: 5.0,
            probed: 5,
            error: None,
        }
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            synthetic: SynthConfig {
                n: 160,
                dim: 3,
                seed: 1,
                ..SynthConfig::default()
            },
            n_uncensored: 20,
            n_censored: 80,
            budgets: vec![0.0, 3.0],
            methods: vec![Method::BbSurv, Method::Random],
            seeds: vec![0],
            n_bins: 5,
            s_post: 6,
            eval_samples: 4,
            epochs: 150,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn cost_modes() {
        let ds = synth_generate(&SynthConfig { n: 50, dim: 2, ..SynthConfig::default() }).unwrap();
        let u = assign_costs(&ds, &CostMode::Uniform, 0).unwrap();
        assert!(u.instances.iter().all(|i| i.cost == 1.0));
        let s = assign_costs(&u, &CostMode::Scaled { factor: 0.2 }, 0).unwrap();
        assert!(s.instances.iter().all(|i| i.cost == 0.2));
        assert!(assign_costs(&ds, &CostMode::Random { lo: 0.0, hi: 1.0 }, 0).is_err());
        let r = assign_costs(&ds, &CostMode::Random { lo: 0.2, hi: 0.8 }, 3).unwrap();
        assert!(r.instances.iter().all(|i| (0.2..0.8).contains(&i.cost)));
    }

    #[test]
    fn random_costs_average_half() {
        let ds = synth_generate(&SynthConfig { n: 100_000, dim: 1, ..SynthConfig::default() }).unwrap();
        let r = assign_costs(&ds, &CostMode::Random { lo: 0.2, hi: 0.8 }, 11).unwrap();
        let m = r.instances.iter().map(|i| i.cost).sum::<f64>() / r.len() as f64;
        assert!((m - 0.5).abs() < 0.01);
    }

    #[test]
    fn config_from_toml() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            dataset = "synthetic"
            budgets = [0, 10]
            probe_depth = 2.5
            methods = ["bb_surv", "random"]
            seeds = [1, 2]
            cost_mode = { kind = "random", lo = 0.2, hi = 0.8 }

            [acquisition]
            censor_weight = 2.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.methods, vec![Method::BbSurv, Method::Random]);
        assert_eq!(cfg.cost_mode, CostMode::Random { lo: 0.2, hi: 0.8 });
        assert_eq!(cfg.cost_mode.to_string(), "random(0.2,0.8)");
        assert_eq!(cfg.acquisition.censor_weight, 2.0);
        assert_eq!(cfg.s_post, 50);
        assert!(ExperimentConfig::from_toml("methods = []").is_err());
        assert!(ExperimentConfig::from_toml("budgets = [-1]").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let mut failed = row(Method::Cfb, 2, 0.0);
        failed.status = CellStatus::Failed;
        failed.mae_po = None;
        failed.error = Some("broken, with a comma".into());
        let table = ResultTable {
            rows: vec![row(Method::BbSurv, 0, 1.234_567_890_123), failed],
        };
        let mut csv_buf = Vec::new();
        emit_report(&table, ReportFormat::Csv, &mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf.clone()).unwrap();
        assert!(text.starts_with("method,dataset,budget,probe_depth,cost_mode,seed,mae_po,mae_unc,cindex,ibs"));
        let mut json_buf = Vec::new();
        emit_report(&table, ReportFormat::Json, &mut json_buf).unwrap();
        let from_csv = read_results_csv(csv_buf.as_slice()).unwrap();
        let from_json = read_results_json(json_buf.as_slice()).unwrap();
        assert_eq!(from_csv, table);
        assert_eq!(from_json, table);
    }

    #[test]
    fn one_row_csv() {
        let table = ResultTable { rows: vec![row(Method::Random, 0, 1.0)] };
        let mut buf = Vec::new();
        emit_report(&table, ReportFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
        assert!(emit_report(&ResultTable::default(), ReportFormat::Csv, Vec::new()).is_err());
    }

    #[test]
    fn ties_bold_several_methods() {
        let mut rows = Vec::new();
        for s in 0..6 {
            let jitter = [0.01, -0.01, 0.02, -0.02, 0.0, 0.005][s as usize];
            rows.push(row(Method::BbSurv, s, 1.0 + jitter));
            rows.push(row(Method::Entropy, s, 1.001 - jitter));
            rows.push(row(Method::Random, s, 3.0 + jitter));
        }
        let table = ResultTable { rows };
        let groups = mae_by_method(&table);
        let bold = bold_methods(groups.values().next().unwrap());
        assert_eq!(bold, vec![Method::BbSurv, Method::Entropy]);
        let mut md = Vec::new();
        emit_report(&table, ReportFormat::Markdown, &mut md).unwrap();
        let md = String::from_utf8(md).unwrap();
        assert_eq!(md.lines().filter(|l| l.starts_with("| 5 |")).count(), 1);
        assert_eq!(md.matches("**").count(), 4);
    }

    #[test]
    fn small_run_is_reproducible() {
        let cfg = small_config();
        let a = run_experiment(&cfg).unwrap();
        assert!(a.all_completed(), "{:?}", a.table.rows);
        assert_eq!(a.table.rows.len(), 4);
        let zero: Vec<&ResultRow> = a.table.rows.iter().filter(|r| r.budget == 0.0).collect();
        assert_eq!(zero[0].mae_po, zero[1].mae_po);
        assert_eq!(zero[0].ibs, zero[1].ibs);
        for r in &a.table.rows {
            assert!(r.spent <= r.budget + 1e-9);
        }
        let b = run_experiment(&cfg).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        emit_report(&a.table, ReportFormat::Csv, &mut x).unwrap();
        emit_report(&b.table, ReportFormat::Csv, &mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn bad_pool_is_recorded_per_cell() {
        let cfg = ExperimentConfig {
            n_censored: 10_000,
            ..small_config()
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(!out.all_completed());
        assert!(out.table.rows.iter().all(|r| r.status == CellStatus::Failed && r.error.is_some()));
    }
}
