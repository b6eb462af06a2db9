use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bbsurv::data::{save_csv, synth_generate, write_csv, SynthConfig};
use bbsurv::experiment::{emit_report, load_results, run_experiment, write_outputs, ExperimentConfig, ReportFormat};
use bbsurv::select::{brute_force_optimal, greedy_enumerated, greedy_ratio_coverage, CoverageInstance, CoverageSet};
use bbsurv::Result;

#[derive(Parser)]
#[command(name = "bbsurv", version, about = "Budgeted active learning for censored survival data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for results and the probe log.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Write a synthetic survival dataset as CSV.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        censor_rate: f64,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the coverage greedies with exhaustive optima on random instances.
    VerifyCoverage {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-render a results file written by `run`.
    Report {
        #[arg(long, default_value = "results/results.json")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
}

fn random_instance(rng: &mut ChaCha8Rng) -> CoverageInstance {
    let n_elems = rng.random_range(1..=10u32);
    let weights = (0..n_elems).map(|e| (e, rng.random_range(0.0..10.0))).collect();
    let sets: Vec<CoverageSet> = (0..rng.random_range(1..=12))
        .map(|_| CoverageSet {
            elements: (0..n_elems).filter(|_| rng.random_bool(0.3)).collect(),
            cost: rng.random_range(0.2..3.0),
        })
        .collect();
    let total: f64 = sets.iter().map(|s| s.cost).sum();
    CoverageInstance {
        weights,
        sets,
        budget: rng.random_range(0.1..1.0) * total,
    }
}

fn verify_coverage(trials: usize, seed: u64) -> Result<bool> {
    let bound = 1.0 - (-1.0f64).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut enum_bad, mut ratio_bad) = (0, 0);
    let (mut enum_worst, mut ratio_worst) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..trials {
        let inst = random_instance(&mut rng);
        let opt = brute_force_optimal(&inst)?.value;
        let e = greedy_enumerated(&inst, 3)?.value;
        let r = greedy_ratio_coverage(&inst)?.value;
        if opt > 0.0 {
            enum_worst = enum_worst.min(e / opt);
            ratio_worst = ratio_worst.min(r / opt);
        }
        enum_bad += usize::from(e < bound * opt - 1e-9);
        ratio_bad += usize::from(r < 0.5 * bound * opt - 1e-9);
    }
    println!("trials: {trials}");
    println!("enumerated greedy (z=3): {enum_bad} below (1-1/e)*OPT, worst ratio {enum_worst:.4}");
    println!("ratio greedy: {ratio_bad} below (1-1/e)/2*OPT, worst ratio {ratio_worst:.4}");
    Ok(enum_bad == 0 && ratio_bad == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let output = run_experiment(&cfg)?;
            for path in write_outputs(&output, &out)? {
                println!("wrote {}", path.display());
            }
            let failed = output.table.rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} of {} cells did not complete", output.table.rows.len());
            }
            Ok(output.all_completed())
        }
        Command::Synth { n, dim, seed, censor_rate, out } => {
            let ds = synth_generate(&SynthConfig {
                n,
                dim,
                seed,
                censor_rate,
                ..SynthConfig::default()
            })?;
            match out {
                Some(path) => save_csv(&ds, path)?,
                None => write_csv(&ds, std::io::stdout().lock())?,
            }
            Ok(true)
        }
        Command::VerifyCoverage { trials, seed } => verify_coverage(trials, seed),
        Command::Report { input, format } => {
            let table = load_results(&input)?;
            emit_report(&table, format, std::io::stdout().lock())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
