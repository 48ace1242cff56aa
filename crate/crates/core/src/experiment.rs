//! Monte Carlo comparison of the distribution models.
//!
//! For every fleet size `N` and run index, one random fleet is drawn and
//! every model is solved on that same fleet, so model comparisons are
//! paired. Seeds are pure functions of the base seed and the cell
//! coordinates, and runs execute in parallel without affecting results.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::DEFAULT_MAX_SWEEPS;
use crate::error::{Error, Result};
use crate::market::{CyclePolicy, MarketParams, SellerTieRule};
use crate::money::Money;
use crate::scenario::{generate_scenario, Economics, Scenario, ScenarioConfig};
use crate::solve::{solve, Model, Solution, SolveOptions};

/// Everything a sweep needs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub runs: usize,
    pub seed: u64,
    pub window_start: i64,
    pub window_end: i64,
    pub max_delay: i64,
    pub economics: Economics,
    pub models: Vec<Model>,
    pub max_sweeps: usize,
    pub seller_tie_rule: SellerTieRule,
    pub on_cycle: CyclePolicy,
    /// Keep a full record of every run.
    pub trace: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_min: 1,
            n_max: 29,
            runs: 50,
            seed: 0,
            window_start: 0,
            window_end: 30,
            max_delay: 10,
            economics: Economics::default(),
            models: Model::ALL.to_vec(),
            max_sweeps: DEFAULT_MAX_SWEEPS,
            seller_tie_rule: SellerTieRule::default(),
            on_cycle: CyclePolicy::default(),
            trace: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("sweep.runs must be at least 1".into()));
        }
        if self.n_min == 0 || self.n_max < self.n_min {
            return Err(Error::Config(format!(
                "sweep N range {}..{} must be nonempty and start at 1 or more",
                self.n_min, self.n_max
            )));
        }
        if self.models.is_empty() {
            return Err(Error::Config("sweep.models is empty".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        self.economics.validate()
    }

    pub fn scenario_config(&self, vehicles: usize) -> ScenarioConfig {
        ScenarioConfig {
            vehicles,
            window_start: self.window_start,
            window_end: self.window_end,
            max_delay: self.max_delay,
            economics: self.economics.clone(),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_sweeps: self.max_sweeps,
            scores: None,
            market: MarketParams {
                price_grid: self.economics.price_grid(),
                initial_prices: None,
                max_sweeps: self.max_sweeps,
                tie_rule: self.seller_tie_rule,
                on_cycle: self.on_cycle,
            },
            seed: 0,
            trace: false,
        }
    }

    pub fn fleet_sizes(&self) -> std::ops::RangeInclusive<usize> {
        self.n_min..=self.n_max
    }

    /// Number of (model, N) cells.
    pub fn cell_count(&self) -> usize {
        self.models.len() * self.fleet_sizes().count()
    }

    /// Fleet for run `run` at size `n`, shared by all models.
    pub fn scenario(&self, n: usize, run: usize) -> Result<Scenario> {
        generate_scenario(&self.scenario_config(n), scenario_seed(self.seed, n, run))
    }
}

/// SplitMix64 output function.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the fleet drawn for `(n, run)`; independent of the model.
pub fn scenario_seed(base: u64, n: usize, run: usize) -> u64 {
    mix(mix(mix(base) ^ n as u64) ^ run as u64)
}

/// Seed for model-specific randomness (score draws) in `(model, n, run)`.
pub fn model_seed(base: u64, model: Model, n: usize, run: usize) -> u64 {
    mix(scenario_seed(base, n, run) ^ mix(0x5EED_0000 + model.ordinal()))
}

/// Summary of one solved game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model: Model,
    pub n: usize,
    pub seed: u64,
    pub total_utility: Money,
    /// Average individual utility in SEK.
    pub mean_utility: f64,
    /// Share of vehicles riding as followers, 0 to 100.
    pub follower_pct: f64,
    pub followers: usize,
    pub leaders: usize,
    pub solos: usize,
    pub platoons: usize,
    pub converged: bool,
    pub cycle_detected: bool,
    pub sweeps: usize,
}

/// Solves `model` on `scenario` and summarizes the solution.
pub fn run_once(model: Model, scenario: &Scenario, seed: u64, options: &SolveOptions) -> Result<RunMetrics> {
    let mut options = options.clone();
    options.seed = seed;
    let solution = solve(model, scenario, &options)?;
    Ok(metrics_of(&solution, seed))
}

pub fn metrics_of(solution: &Solution, seed: u64) -> RunMetrics {
    let n = solution.utilities.len();
    let platoons = match &solution.market {
        Some(m) => m.followers.values().filter(|f| !f.is_empty()).count(),
        None => solution.profile.platoons().values().filter(|m| m.len() > 1).count(),
    };
    let leaders = platoons;
    let total = solution.total_utility();
    RunMetrics {
        model: solution.model,
        n,
        seed,
        total_utility: total,
        mean_utility: solution.mean_utility().to_f64(),
        follower_pct: 100.0 * solution.followers as f64 / n as f64,
        followers: solution.followers,
        leaders,
        solos: n - solution.followers - leaders,
        platoons,
        converged: solution.converged,
        cycle_detected: solution.cycle_detected(),
        sweeps: solution.sweeps(),
    }
}

/// One CSV row: a (model, N) cell aggregated over its runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: Model,
    #[serde(rename = "N")]
    pub n: usize,
    pub mean_utility: f64,
    pub se_utility: f64,
    pub mean_follower_pct: f64,
    pub se_follower_pct: f64,
    pub nonconvergence_count: usize,
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

fn summarize(model: Model, n: usize, runs: &[&RunMetrics]) -> CellSummary {
    let utility: Vec<f64> = runs.iter().map(|r| r.mean_utility).collect();
    let followers: Vec<f64> = runs.iter().map(|r| r.follower_pct).collect();
    let (mean_utility, se_utility) = mean_and_se(&utility);
    let (mean_follower_pct, se_follower_pct) = mean_and_se(&followers);
    CellSummary {
        model,
        n,
        mean_utility,
        se_utility,
        mean_follower_pct,
        se_follower_pct,
        nonconvergence_count: runs.iter().filter(|r| !r.converged).count(),
    }
}

/// Full record of one run, kept when tracing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub metrics: RunMetrics,
    pub scenario: Scenario,
    pub solution: Solution,
}

/// Output of [`monte_carlo_sweep`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepTable {
    /// One row per cell over all runs, in model order then N.
    pub rows: Vec<CellSummary>,
    /// Same cells restricted to converged runs.
    pub converged_rows: Vec<CellSummary>,
    /// Every run's metrics, in cell order then run index.
    pub runs: Vec<RunMetrics>,
    /// Runs that failed with an error, per cell.
    pub failures: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<RunRecord>,
}

struct Job {
    model: Model,
    n: usize,
    run: usize,
}

/// Solves every model on `runs` paired fleets for every N in range.
pub fn monte_carlo_sweep(config: &SweepConfig) -> Result<SweepTable> {
    config.validate()?;
    let options = config.solve_options();
    let jobs: Vec<Job> = config
        .models
        .iter()
        .flat_map(|&model| {
            config.fleet_sizes().flat_map(move |n| (0..config.runs).map(move |run| Job { model, n, run }))
        })
        .collect();

    let results: Vec<Result<(RunMetrics, Option<RunRecord>)>> = jobs
        .par_iter()
        .map(|job| {
            let scenario = config.scenario(job.n, job.run)?;
            let seed = model_seed(config.seed, job.model, job.n, job.run);
            let mut opts = options.clone();
            opts.seed = seed;
            let solution = solve(job.model, &scenario, &opts)?;
            let metrics = metrics_of(&solution, seed);
            let record = config.trace.then(|| RunRecord { run: job.run, metrics: metrics.clone(), scenario, solution });
            Ok((metrics, record))
        })
        .collect();

    let mut table = SweepTable::default();
    let mut by_cell: BTreeMap<(usize, usize), Vec<RunMetrics>> = BTreeMap::new();
    for (job, result) in jobs.iter().zip(results) {
        let key = (job.model.ordinal() as usize, job.n);
        match result {
            Ok((metrics, record)) => {
                by_cell.entry(key).or_default().push(metrics.clone());
                table.runs.push(metrics);
                table.records.extend(record);
            }
            Err(err) => {
                log::error!("{} N={} run {}: {err}", job.model, job.n, job.run);
                *table.failures.entry(format!("{}:{}", job.model, job.n)).or_default() += 1;
            }
        }
    }
    for &model in &config.models {
        for n in config.fleet_sizes() {
            let runs = by_cell.get(&(model.ordinal() as usize, n)).map(Vec::as_slice).unwrap_or(&[]);
            let all: Vec<&RunMetrics> = runs.iter().collect();
            let converged: Vec<&RunMetrics> = runs.iter().filter(|r| r.converged).collect();
            table.rows.push(summarize(model, n, &all));
            table.converged_rows.push(summarize(model, n, &converged));
        }
    }
    Ok(table)
}

/// Writes cell rows with the header
/// `model,N,mean_utility,se_utility,mean_follower_pct,se_follower_pct,nonconvergence_count`.
pub fn write_csv<W: Write>(rows: &[CellSummary], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-run metrics of every model on the same `runs` fleets of size `n`.
pub fn paired_runs(config: &SweepConfig, n: usize) -> Result<BTreeMap<Model, Vec<RunMetrics>>> {
    let options = config.solve_options();
    let per_model: Vec<(Model, Result<Vec<RunMetrics>>)> = config
        .models
        .par_iter()
        .map(|&model| {
            let runs = (0..config.runs)
                .map(|run| {
                    let scenario = config.scenario(n, run)?;
                    run_once(model, &scenario, model_seed(config.seed, model, n, run), &options)
                })
                .collect();
            (model, runs)
        })
        .collect();
    per_model.into_iter().map(|(m, r)| r.map(|r| (m, r))).collect()
}

/// Mean and standard error of `a - b` over paired samples.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_and_se(&diffs)
}
