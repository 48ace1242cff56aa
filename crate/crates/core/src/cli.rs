//! Command-line driver: `gen`, `solve`, `oracle` and `sweep`.
//!
//! Every command reads an optional JSON config with the sections
//! `economics`, `fleet`, `model` and `sweep`; flags override file values.
//! Exit status is 0 on success, 1 on usage or config errors, 2 when a
//! solution fails a quality check and 3 when an oracle would exceed its
//! enumeration cap.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::distribution::ScoreState;
use crate::equilibrium::{
    enumerate_equilibria, profile_space_size, social_optimum, DepartureGame, DEFAULT_ENUMERATION_CAP,
    DEFAULT_MAX_SWEEPS,
};
use crate::error::{Error, Result};
use crate::experiment::{monte_carlo_sweep, write_csv, SweepConfig};
use crate::market::{CyclePolicy, MarketGame, MarketOutcome, MarketParams, SellerTieRule};
use crate::money::Money;
use crate::plot::{follower_chart, utility_chart};
use crate::scenario::{
    generate_scenario, scenario_from_defaults, DepartureProfile, Economics, Scenario, ScenarioConfig,
};
use crate::solve::{solve, Model, Solution, SolveOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_QUALITY: i32 = 2;
pub const EXIT_CAP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "platoon-match", version, about = "Departure-time platoon matching games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random fleet and write it as scenario.json.
    Gen(CommonArgs),
    /// Solve one game and write solution.json.
    Solve(SolveArgs),
    /// Enumerate every pure equilibrium and write equilibria.json.
    Oracle(OracleArgs),
    /// Run the Monte Carlo comparison and write the result table.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Record per-sweep or per-run detail.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Distribution model: even_out, score, market, cooperative or spontaneous.
    #[arg(long)]
    pub model: Option<String>,
    /// Scenario JSON to solve instead of generating one.
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Solution JSON whose profile is checked for membership.
    #[arg(long, value_name = "FILE")]
    pub solution: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Write utility.svg and followers.svg.
    #[arg(long)]
    pub plot: bool,
    /// Comma-separated model tags.
    #[arg(long, value_name = "LIST")]
    pub models: Option<String>,
    /// Fleet sizes as A..B (inclusive) or a single N.
    #[arg(long, value_name = "A..B")]
    pub n: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// The config file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub economics: Economics,
    pub fleet: FleetSection,
    pub model: ModelSection,
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetSection {
    pub vehicles: usize,
    pub window_start: i64,
    pub window_end: i64,
    pub max_delay: i64,
    pub seed: u64,
    /// Scenario JSON, relative to the config file.
    pub scenario_file: Option<PathBuf>,
    /// Explicit default departure times, one per vehicle.
    pub defaults: Option<Vec<i64>>,
}

impl Default for FleetSection {
    fn default() -> Self {
        let base = ScenarioConfig::default();
        FleetSection {
            vehicles: base.vehicles,
            window_start: base.window_start,
            window_end: base.window_end,
            max_delay: base.max_delay,
            seed: 0,
            scenario_file: None,
            defaults: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: Model,
    pub max_sweeps: usize,
    pub enumeration_cap: u64,
    /// Fixed scores for the score system, one per vehicle.
    pub scores: Option<Vec<Money>>,
    pub price_grid: Option<Vec<Money>>,
    pub initial_prices: Option<Vec<Money>>,
    pub seller_tie_rule: SellerTieRule,
    pub on_cycle: CyclePolicy,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            name: Model::EvenOut,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            enumeration_cap: DEFAULT_ENUMERATION_CAP as u64,
            scores: None,
            price_grid: None,
            initial_prices: None,
            seller_tie_rule: SellerTieRule::default(),
            on_cycle: CyclePolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_min: usize,
    pub n_max: usize,
    pub runs: usize,
    pub seed: u64,
    pub models: Vec<Model>,
    pub format: OutputFormat,
}

impl Default for SweepSection {
    fn default() -> Self {
        let base = SweepConfig::default();
        SweepSection {
            n_min: base.n_min,
            n_max: base.n_max,
            runs: base.runs,
            seed: base.seed,
            models: base.models,
            format: OutputFormat::Csv,
        }
    }
}

/// Config plus the directory relative paths resolve against.
struct Loaded {
    file: ConfigFile,
    base_dir: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<Loaded> {
    let Some(path) = path else {
        return Ok(Loaded { file: ConfigFile::default(), base_dir: PathBuf::from(".") });
    };
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let file: ConfigFile =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
    file.economics.validate().map_err(|e| Error::Config(format!("config {}: economics: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { file, base_dir })
}

impl ConfigFile {
    fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            vehicles: self.fleet.vehicles,
            window_start: self.fleet.window_start,
            window_end: self.fleet.window_end,
            max_delay: self.fleet.max_delay,
            economics: self.economics.clone(),
        }
    }

    fn market_params(&self) -> MarketParams {
        MarketParams {
            price_grid: self.model.price_grid.clone().unwrap_or_else(|| self.economics.price_grid()),
            initial_prices: self.model.initial_prices.clone(),
            max_sweeps: self.model.max_sweeps,
            tie_rule: self.model.seller_tie_rule,
            on_cycle: self.model.on_cycle,
        }
    }

    fn solve_options(&self, seed: u64, trace: bool) -> Result<SolveOptions> {
        let scores = match &self.model.scores {
            Some(values) => Some(ScoreState::new(values.iter().map(|m| m.value()).collect())?),
            None => None,
        };
        Ok(SolveOptions { max_sweeps: self.model.max_sweeps, scores, market: self.market_params(), seed, trace })
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{what} {}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create output dir {}: {e}", dir.display())))
}

/// Scenario from `--scenario`, `fleet.scenario_file`, `fleet.defaults`, or a fresh draw.
fn scenario_for(loaded: &Loaded, flag: Option<&Path>, seed: u64) -> Result<Scenario> {
    let fleet = &loaded.file.fleet;
    if let Some(path) = flag {
        return read_json(path, "scenario");
    }
    if let Some(path) = &fleet.scenario_file {
        return read_json(&loaded.base_dir.join(path), "fleet.scenario_file");
    }
    if let Some(defaults) = &fleet.defaults {
        return scenario_from_defaults(defaults, fleet.max_delay, &loaded.file.economics)
            .map_err(|e| Error::Config(format!("fleet.defaults: {e}")));
    }
    generate_scenario(&loaded.file.scenario_config(), seed).map_err(|e| Error::Config(format!("fleet: {e}")))
}

fn model_for(loaded: &Loaded, flag: Option<&str>) -> Result<Model> {
    match flag {
        Some(tag) => tag.parse(),
        None => Ok(loaded.file.model.name),
    }
}

fn cmd_gen(args: &CommonArgs) -> Result<i32> {
    let loaded = load_config(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(loaded.file.fleet.seed);
    let scenario = scenario_for(&loaded, None, seed)?;
    prepare_out(&args.out)?;
    let path = write_json(&args.out, "scenario.json", &scenario)?;
    println!("wrote {} ({} vehicles)", path.display(), scenario.len());
    Ok(EXIT_OK)
}

fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let common = &args.common;
    let loaded = load_config(common.config.as_deref())?;
    let model = model_for(&loaded, args.model.as_deref())?;
    let seed = common.seed.unwrap_or(loaded.file.fleet.seed);
    let scenario = scenario_for(&loaded, args.scenario.as_deref(), seed)?;
    let options = loaded.file.solve_options(seed, common.trace)?;
    let solution = solve(model, &scenario, &options)?;
    prepare_out(&common.out)?;
    let path = write_json(&common.out, "solution.json", &solution)?;
    println!(
        "{model}: profile {:?}, mean utility {}, followers {}/{}, {}",
        solution.profile.departures,
        solution.mean_utility(),
        solution.followers,
        scenario.len(),
        if solution.converged { "converged" } else { "did not converge" }
    );
    println!("wrote {}", path.display());
    Ok(if solution.converged { EXIT_OK } else { EXIT_QUALITY })
}

/// The part of a solution file the oracle reads; extra fields are ignored.
#[derive(Debug, Deserialize)]
struct SolutionFile {
    profile: DepartureProfile,
    #[serde(default)]
    scores: Option<ScoreState>,
    #[serde(default)]
    market: Option<MarketOutcome>,
}

#[derive(Debug, Serialize)]
struct Membership {
    source: String,
    candidate: serde_json::Value,
    is_equilibrium: bool,
}

#[derive(Debug, Serialize)]
struct SocialOptimum {
    profile: DepartureProfile,
    welfare: Money,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    model: Model,
    /// What a decision is: a departure time, or a seller price in the market.
    decision: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    sellers: Option<Vec<u32>>,
    profile_space_size: String,
    equilibria: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    social_optimum: Option<SocialOptimum>,
    checks: Vec<Membership>,
}

fn check<D: Serialize + PartialEq>(source: &str, candidate: &[D], equilibria: &[Vec<D>]) -> Result<Membership> {
    Ok(Membership {
        source: source.to_string(),
        candidate: serde_json::to_value(candidate)?,
        is_equilibrium: equilibria.iter().any(|e| e.as_slice() == candidate),
    })
}

fn departure_oracle(
    game: &DepartureGame<'_>,
    cap: u128,
    own: &Solution,
    provided: Option<&SolutionFile>,
) -> Result<(String, serde_json::Value, Vec<Membership>)> {
    let size = profile_space_size(game);
    let equilibria = enumerate_equilibria(game, cap)?;
    let mut checks = vec![check("solver", &own.profile.departures, &equilibria)?];
    if let Some(file) = provided {
        checks.push(check("solution file", &file.profile.departures, &equilibria)?);
    }
    Ok((size.to_string(), serde_json::to_value(&equilibria)?, checks))
}

fn cmd_oracle(args: &OracleArgs) -> Result<i32> {
    let common = &args.solve.common;
    let loaded = load_config(common.config.as_deref())?;
    let model = model_for(&loaded, args.solve.model.as_deref())?;
    let seed = common.seed.unwrap_or(loaded.file.fleet.seed);
    let scenario = scenario_for(&loaded, args.solve.scenario.as_deref(), seed)?;
    let cap = loaded.file.model.enumeration_cap as u128;
    let provided: Option<SolutionFile> = args.solution.as_deref().map(|p| read_json(p, "solution")).transpose()?;
    let mut options = loaded.file.solve_options(seed, false)?;
    if model == Model::Score && options.scores.is_none() {
        options.scores = provided.as_ref().and_then(|f| f.scores.clone());
    }
    let own = solve(model, &scenario, &options)?;

    let mut report = OracleReport {
        model,
        decision: "departure",
        sellers: None,
        profile_space_size: String::new(),
        equilibria: serde_json::Value::Null,
        social_optimum: None,
        checks: Vec::new(),
    };
    match model {
        Model::EvenOut | Model::Cooperative => {
            let game = if model == Model::EvenOut {
                DepartureGame::even_out(&scenario)
            } else {
                DepartureGame::cooperative(&scenario)
            };
            (report.profile_space_size, report.equilibria, report.checks) =
                departure_oracle(&game, cap, &own, provided.as_ref())?;
            if model == Model::Cooperative {
                let (profile, welfare) = social_optimum(&scenario, cap)?;
                report.social_optimum = Some(SocialOptimum { profile, welfare });
            }
        }
        Model::Score => {
            let scores = own.scores.clone().expect("score solutions carry scores");
            let game = DepartureGame::score(&scenario, &scores)?;
            (report.profile_space_size, report.equilibria, report.checks) =
                departure_oracle(&game, cap, &own, provided.as_ref())?;
        }
        Model::Spontaneous => {
            let defaults = vec![scenario.default_times()];
            report.profile_space_size = "1".into();
            report.equilibria = serde_json::to_value(&defaults)?;
            report.checks.push(check("solver", &own.profile.departures, &defaults)?);
            if let Some(file) = &provided {
                report.checks.push(check("solution file", &file.profile.departures, &defaults)?);
            }
        }
        Model::Market => {
            let outcome = own.market.as_ref().expect("market solutions carry an outcome");
            let state = &outcome.assignment.state;
            let game = MarketGame::from_state(&scenario, state)?.with_tie_rule(loaded.file.model.seller_tie_rule);
            report.decision = "price";
            report.sellers = Some(game.sellers().iter().map(|s| s.0).collect());
            report.profile_space_size = profile_space_size(&game).to_string();
            let equilibria = enumerate_equilibria(&game, cap)?;
            report.checks.push(check("solver", &game.current_prices(state), &equilibria)?);
            if let Some(file) = &provided {
                let Some(theirs) = &file.market else {
                    return Err(Error::Config("solution file has no `market` section".into()));
                };
                let prices: Vec<Option<Money>> =
                    game.sellers().iter().map(|s| theirs.assignment.state.price(*s)).collect();
                let as_options: Vec<Vec<Option<Money>>> =
                    equilibria.iter().map(|e| e.iter().copied().map(Some).collect()).collect();
                report.checks.push(check("solution file", &prices, &as_options)?);
            }
            report.equilibria = serde_json::to_value(&equilibria)?;
        }
    }
    prepare_out(&common.out)?;
    let path = write_json(&common.out, "equilibria.json", &report)?;
    let count = report.equilibria.as_array().map_or(0, Vec::len);
    println!("{model}: {count} pure equilibria over {} profiles", report.profile_space_size);
    let mut ok = true;
    for c in &report.checks {
        println!(
            "{}: {} {}",
            c.source,
            c.candidate,
            if c.is_equilibrium { "is an equilibrium" } else { "is NOT an equilibrium" }
        );
        ok &= c.is_equilibrium;
    }
    println!("wrote {}", path.display());
    Ok(if ok { EXIT_OK } else { EXIT_QUALITY })
}

/// Parses `A..B`, `A..=B` or `A` into an inclusive range.
pub fn parse_n_range(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--n expects A..B, got `{text}`"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let n = num(text)?;
            (n, n)
        }
    };
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

pub fn parse_models(list: &str) -> Result<Vec<Model>> {
    let models: Vec<Model> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if models.is_empty() {
        return Err(Error::Config("--models is empty".into()));
    }
    Ok(models)
}

fn sweep_config(loaded: &Loaded, args: &SweepArgs) -> Result<SweepConfig> {
    let file = &loaded.file;
    let (n_min, n_max) = match &args.n {
        Some(text) => parse_n_range(text)?,
        None => (file.sweep.n_min, file.sweep.n_max),
    };
    let models = match &args.models {
        Some(list) => parse_models(list)?,
        None => file.sweep.models.clone(),
    };
    let config = SweepConfig {
        n_min,
        n_max,
        runs: file.sweep.runs,
        seed: args.common.seed.unwrap_or(file.sweep.seed),
        window_start: file.fleet.window_start,
        window_end: file.fleet.window_end,
        max_delay: file.fleet.max_delay,
        economics: file.economics.clone(),
        models,
        max_sweeps: file.model.max_sweeps,
        seller_tie_rule: file.model.seller_tie_rule,
        on_cycle: file.model.on_cycle,
        trace: args.common.trace,
    };
    config.validate()?;
    Ok(config)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let loaded = load_config(args.common.config.as_deref())?;
    let config = sweep_config(&loaded, args)?;
    let format = args.format.unwrap_or(loaded.file.sweep.format);
    let out = &args.common.out;
    prepare_out(out)?;
    log::info!("sweeping {} cells x {} runs", config.cell_count(), config.runs);
    let table = monte_carlo_sweep(&config)?;

    match format {
        OutputFormat::Csv => {
            write_csv(&table.rows, BufWriter::new(fs::File::create(out.join("sweep.csv"))?))?;
            write_csv(&table.converged_rows, BufWriter::new(fs::File::create(out.join("sweep_converged.csv"))?))?;
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Tables<'a> {
                rows: &'a [crate::experiment::CellSummary],
                converged_rows: &'a [crate::experiment::CellSummary],
            }
            write_json(out, "sweep.json", &Tables { rows: &table.rows, converged_rows: &table.converged_rows })?;
        }
    }
    if args.plot {
        fs::write(out.join("utility.svg"), utility_chart(&table.rows))?;
        fs::write(out.join("followers.svg"), follower_chart(&table.rows))?;
    }
    if config.trace {
        let mut w = BufWriter::new(fs::File::create(out.join("runs.jsonl"))?);
        for record in &table.records {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let nonconverged: usize = table.rows.iter().map(|r| r.nonconvergence_count).sum();
    let failures: usize = table.failures.values().sum();
    println!(
        "{} rows, {} runs, {} did not converge, {} failed; output in {}",
        table.rows.len(),
        table.runs.len(),
        nonconverged,
        failures,
        out.display()
    );
    Ok(if nonconverged == 0 && failures == 0 { EXIT_OK } else { EXIT_QUALITY })
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::EnumerationCap { .. } => EXIT_CAP,
        _ => EXIT_USAGE,
    }
}

/// Runs the command line `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    result.unwrap_or_else(|err| {
        eprintln!("error: {err}");
        exit_code(&err)
    })
}
