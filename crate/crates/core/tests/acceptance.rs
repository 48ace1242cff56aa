//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use platoon_match::distribution::{
    apply_score_updates, transaction_profit_follower, transaction_profit_leader, utility_cooperative, utility_even_out,
    ScoreState,
};
use platoon_match::equilibrium::{
    enumerate_equilibria, is_nash, social_optimum, DepartureGame, DEFAULT_ENUMERATION_CAP,
};
use platoon_match::experiment::{paired_difference, paired_runs, SweepConfig};
use platoon_match::market::{irrational_buyer, MarketGame};
use platoon_match::money::{frac, Fraction, Money};
use platoon_match::scenario::{generate_scenario, DepartureProfile, Scenario, ScenarioConfig, Vehicle, VehicleId};
use platoon_match::solve::{solve, Model, SolveOptions};

type Outcome = Result<String, String>;

const SOUNDNESS_SCENARIOS: u64 = 200;
const ORACLE_INSTANCES: u64 = 100;
const IDENTITY_CASES: u32 = 1000;
const ORDERING_N: usize = 20;
const ORDERING_RUNS: usize = 50;

fn soundness_scenario(k: u64) -> Scenario {
    let n = 2 + (k % 9) as usize;
    generate_scenario(&ScenarioConfig::with_vehicles(n), 10_000 + k).unwrap()
}

fn options(seed: u64) -> SolveOptions {
    let mut o = SweepConfig::default().solve_options();
    o.seed = seed;
    o
}

fn departure_game<'a>(model: Model, s: &'a Scenario, scores: Option<&'a ScoreState>) -> DepartureGame<'a> {
    match model {
        Model::EvenOut => DepartureGame::even_out(s),
        Model::Cooperative => DepartureGame::cooperative(s),
        Model::Score => DepartureGame::score(s, scores.unwrap()).unwrap(),
        other => panic!("{other} has no departure game"),
    }
}

fn reference_utility<'a>(
    model: Model,
    s: &'a Scenario,
    scores: Option<&'a ScoreState>,
) -> Box<dyn Fn(&[i64], usize) -> Money + 'a> {
    match model {
        Model::EvenOut => Box::new(move |d, i| common::even_out(s, d, i)),
        Model::Score => Box::new(move |d, i| common::score(s, scores.unwrap(), d, i)),
        Model::Cooperative => Box::new(move |d, _| common::welfare(s, d)),
        other => panic!("{other} has no departure game"),
    }
}

const DEPARTURE_MODELS: [Model; 3] = [Model::EvenOut, Model::Score, Model::Cooperative];

/// Converged departure-game profiles are equilibria; market outcomes pass
/// seller-deviation and buyer-rationality checks.
fn equilibrium_soundness() -> Outcome {
    let mut checked = 0;
    let mut unconverged = 0;
    for k in 0..SOUNDNESS_SCENARIOS {
        let s = soundness_scenario(k);
        for model in DEPARTURE_MODELS {
            let sol = solve(model, &s, &options(k)).map_err(|e| e.to_string())?;
            if !sol.converged {
                unconverged += 1;
                continue;
            }
            let d = &sol.profile.departures;
            let game = departure_game(model, &s, sol.scores.as_ref());
            if !is_nash(&game, d) {
                return Err(format!("scenario {k} {model}: {d:?} fails is_nash"));
            }
            let u = reference_utility(model, &s, sol.scores.as_ref());
            if let Some((i, t)) = common::profitable_move(&s, d, &*u) {
                return Err(format!("scenario {k} {model}: vehicle {} gains by moving to {t}", i + 1));
            }
            checked += 1;
        }
        let sol = solve(Model::Market, &s, &options(k)).map_err(|e| e.to_string())?;
        let out = sol.market.as_ref().unwrap();
        if !sol.converged {
            unconverged += 1;
            continue;
        }
        let game = MarketGame::from_state(&s, &out.assignment.state).map_err(|e| e.to_string())?;
        if !is_nash(&game, &game.current_prices(&out.assignment.state)) {
            return Err(format!("scenario {k} market: prices fail is_nash"));
        }
        if let Some(j) = irrational_buyer(out, &s).map_err(|e| e.to_string())? {
            return Err(format!("scenario {k} market: buyer {j} is irrational"));
        }
        common::check_market(&s, out, &s_grid()).map_err(|e| format!("scenario {k} market: {e}"))?;
        checked += 1;
    }
    Ok(format!("{checked} converged solutions verified, {unconverged} unconverged runs"))
}

fn s_grid() -> Vec<Money> {
    SweepConfig::default().economics.price_grid()
}

/// Converged profiles belong to the enumerated equilibrium set, the
/// library's enumeration agrees with a from-scratch one, and cooperative
/// solutions never beat the social optimum.
fn oracle_equivalence() -> Outcome {
    let mut gaps = Vec::new();
    let mut members = 0;
    for k in 0..ORACLE_INSTANCES {
        let n = 1 + (k % 4) as usize;
        let s = generate_scenario(&ScenarioConfig::with_vehicles(n), 20_000 + k).unwrap();
        for model in DEPARTURE_MODELS {
            let sol = solve(model, &s, &options(k)).map_err(|e| e.to_string())?;
            if !sol.converged {
                return Err(format!("instance {k} {model}: did not converge"));
            }
            let game = departure_game(model, &s, sol.scores.as_ref());
            let mut listed = enumerate_equilibria(&game, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
            if !listed.contains(&sol.profile.departures) {
                return Err(format!("instance {k} {model}: {:?} not enumerated", sol.profile.departures));
            }
            let u = reference_utility(model, &s, sol.scores.as_ref());
            let mut reference = common::equilibria(&s, &*u);
            listed.sort();
            reference.sort();
            if listed != reference {
                return Err(format!("instance {k} {model}: enumeration {listed:?} vs reference {reference:?}"));
            }
            members += 1;
            if model == Model::Cooperative {
                let reached = utility_cooperative(&sol.profile, &s).map_err(|e| e.to_string())?;
                let (_, best) = social_optimum(&s, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
                if best != common::best_welfare(&s) {
                    return Err(format!("instance {k}: social optimum {best} disagrees with reference"));
                }
                if reached > best {
                    return Err(format!("instance {k}: cooperative {reached} exceeds optimum {best}"));
                }
                let gap = if best.is_zero() { 0.0 } else { (best - reached).to_f64() / best.to_f64() };
                gaps.push(gap);
            }
        }
        let sol = solve(Model::Market, &s, &options(k)).map_err(|e| e.to_string())?;
        let state = &sol.market.as_ref().unwrap().assignment.state;
        let game = MarketGame::from_state(&s, state).map_err(|e| e.to_string())?;
        let listed = enumerate_equilibria(&game, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
        if !listed.contains(&game.current_prices(state)) {
            return Err(format!("instance {k} market: final prices not enumerated"));
        }
        members += 1;
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    Ok(format!(
        "{members} memberships confirmed; cooperative gap to optimum mean {:.2}%, max {:.2}%",
        100.0 * mean_gap,
        100.0 * max_gap
    ))
}

fn money() -> impl Strategy<Value = Money> {
    (-20_000i128..20_000).prop_map(|c| Money::ratio(c, 100))
}

fn vehicle_with(profit_leader: Money, profit_follower: Money) -> Vehicle {
    Vehicle {
        id: VehicleId(1),
        default_departure: 0,
        max_delay: 10,
        profit_leader,
        profit_follower,
        penalty_rate: Money::from_int(10),
        score_valuation: Money::ratio(105, 4),
    }
}

fn one_vehicle(pl: Money, pf: Money, std_l: Money, std_f: Money) -> Scenario {
    Scenario::new(vec![vehicle_with(pl, pf)], std_l, std_f).unwrap()
}

/// A fleet of up to 8 vehicles with random defaults and profits, plus a
/// random feasible profile.
fn fleet_and_profile() -> impl Strategy<Value = (Scenario, DepartureProfile)> {
    prop::collection::vec((0i64..=30, money(), money()), 1..=8)
        .prop_flat_map(|raw| {
            let n = raw.len();
            (Just(raw), money(), money(), prop::collection::vec(any::<prop::sample::Index>(), n))
        })
        .prop_map(|(raw, std_l, std_f, picks)| {
            let vehicles: Vec<Vehicle> = raw
                .iter()
                .enumerate()
                .map(|(i, &(d, pl, pf))| Vehicle {
                    id: VehicleId::from_index(i),
                    default_departure: d,
                    ..vehicle_with(pl, pf)
                })
                .collect();
            let s = Scenario::new(vehicles, std_l, std_f).unwrap();
            let departures = picks
                .iter()
                .enumerate()
                .map(|(i, pick)| {
                    let options = s.feasible_departures(VehicleId::from_index(i)).unwrap();
                    options[pick.index(options.len())]
                })
                .collect();
            (s, DepartureProfile::new(departures))
        })
}

fn run_identity<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases: IDENTITY_CASES, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

/// Exact transfer and score identities over random draws.
fn formula_identities() -> Outcome {
    run_identity(
        "leader and follower profits agree at standard profits",
        (money(), money(), 2usize..=40),
        |(l, f, n)| {
            let s = one_vehicle(l, f, l, f);
            let lead = transaction_profit_leader(VehicleId(1), n, &s).unwrap();
            let follow = transaction_profit_follower(VehicleId(1), n, &s).unwrap();
            prop_assert_eq!(lead, follow);
            Ok(())
        },
    )?;
    run_identity(
        "even-out utility ignores standard profits",
        (fleet_and_profile(), money(), money()),
        |((s, profile), l, f)| {
            let other = s.with_standard_profits(l, f);
            for id in s.ids() {
                prop_assert_eq!(
                    utility_even_out(id, &profile, &s).unwrap(),
                    utility_even_out(id, &profile, &other).unwrap()
                );
            }
            Ok(())
        },
    )?;
    run_identity(
        "expected transaction profit reduces to the even-out share",
        (money(), money(), money(), money(), 2usize..=40),
        |(pl, pf, std_l, std_f, n)| {
            let s = one_vehicle(pl, pf, std_l, std_f);
            let lead = transaction_profit_leader(VehicleId(1), n, &s).unwrap();
            let follow = transaction_profit_follower(VehicleId(1), n, &s).unwrap();
            let w_lead: Fraction = frac(1, n as i128);
            let w_follow: Fraction = frac(n as i128 - 1, n as i128);
            prop_assert_eq!(lead * w_lead + follow * w_follow, pl * w_lead + pf * w_follow);
            Ok(())
        },
    )?;
    run_identity(
        "score changes cancel within each platoon",
        (fleet_and_profile(), any::<u64>()),
        |((s, profile), seed)| {
            let scores = ScoreState::random(s.len(), &mut ChaCha8Rng::seed_from_u64(seed));
            let next = apply_score_updates(&profile, &scores, &s).unwrap();
            for members in profile.platoons().values() {
                let change: Fraction = members.iter().map(|id| next.score(*id) - scores.score(*id)).sum();
                prop_assert_eq!(change, frac(0, 1));
            }
            Ok(())
        },
    )?;
    Ok(format!("4 identities x {IDENTITY_CASES} draws, exact equality"))
}

struct Paired {
    runs: std::collections::BTreeMap<Model, Vec<platoon_match::experiment::RunMetrics>>,
}

impl Paired {
    fn collect() -> Result<Self, String> {
        let config = SweepConfig { runs: ORDERING_RUNS, ..SweepConfig::default() };
        Ok(Paired { runs: paired_runs(&config, ORDERING_N).map_err(|e| e.to_string())? })
    }

    fn series(&self, model: Model, metric: fn(&platoon_match::experiment::RunMetrics) -> f64) -> Vec<f64> {
        self.runs[&model].iter().map(metric).collect()
    }

    /// Paired mean and SE of `a - b`.
    fn diff(&self, a: Model, b: Model, metric: fn(&platoon_match::experiment::RunMetrics) -> f64) -> (f64, f64) {
        paired_difference(&self.series(a, metric), &self.series(b, metric))
    }

    fn mean(&self, model: Model, metric: fn(&platoon_match::experiment::RunMetrics) -> f64) -> f64 {
        let v = self.series(model, metric);
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn utility(r: &platoon_match::experiment::RunMetrics) -> f64 {
    r.mean_utility
}

fn follower_share(r: &platoon_match::experiment::RunMetrics) -> f64 {
    r.follower_pct
}

/// Mean utility ordering cooperative >= even_out >= score >= market >=
/// spontaneous within one paired SE, spontaneous lowest by two SEs.
fn utility_ordering(p: &Paired) -> Outcome {
    let chain = [Model::Cooperative, Model::EvenOut, Model::Score, Model::Market, Model::Spontaneous];
    let means: Vec<String> = chain.iter().map(|&m| format!("{m} {:.2}", p.mean(m, utility))).collect();
    let mut failures = Vec::new();
    for pair in chain.windows(2) {
        let (d, se) = p.diff(pair[0], pair[1], utility);
        if d < -se {
            failures.push(format!("{} - {} = {d:.2} < -{se:.2}", pair[0], pair[1]));
        }
    }
    for &m in &chain[..4] {
        let (d, se) = p.diff(m, Model::Spontaneous, utility);
        if d < 2.0 * se || d <= 0.0 {
            failures.push(format!("{m} - spontaneous = {d:.2}, needs >= {:.2}", 2.0 * se));
        }
    }
    let summary = format!("means at N={ORDERING_N}: {}", means.join(", "));
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

/// Score has the largest follower share, within one paired SE.
fn follower_ordering(p: &Paired) -> Outcome {
    let mut failures = Vec::new();
    for other in [Model::Cooperative, Model::EvenOut] {
        let (d, se) = p.diff(Model::Score, other, follower_share);
        if d < -se {
            failures.push(format!("score - {other} = {d:.2} < -{se:.2}"));
        }
    }
    let summary = format!(
        "follower % score {:.1}, cooperative {:.1}, even_out {:.1}",
        p.mean(Model::Score, follower_share),
        p.mean(Model::Cooperative, follower_share),
        p.mean(Model::EvenOut, follower_share)
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

fn cooperative_never_cycles() -> Outcome {
    for k in 0..SOUNDNESS_SCENARIOS {
        let s = soundness_scenario(k);
        let sol = solve(Model::Cooperative, &s, &options(k)).map_err(|e| e.to_string())?;
        if sol.cycle_detected() || !sol.converged {
            return Err(format!("scenario {k}: cooperative iteration cycled or hit the sweep cap"));
        }
    }
    Ok(format!("{SOUNDNESS_SCENARIOS} scenarios, no cycles"))
}

fn market_structure() -> Outcome {
    let mut demotions = 0;
    let mut breaks = 0;
    for k in 0..SOUNDNESS_SCENARIOS {
        let s = soundness_scenario(k);
        let sol = solve(Model::Market, &s, &options(k)).map_err(|e| e.to_string())?;
        let out = sol.market.as_ref().unwrap();
        for (seller, followers) in &out.followers {
            if followers.is_empty() {
                return Err(format!("scenario {k}: seller {seller} has no followers"));
            }
            let v = s.vehicle(*seller).unwrap();
            if out.profile.departure(*seller) != v.default_departure {
                return Err(format!("scenario {k}: seller {seller} left its default"));
            }
        }
        if out.assignment.demotions.len() > s.len() {
            return Err(format!("scenario {k}: {} demotions for N={}", out.assignment.demotions.len(), s.len()));
        }
        demotions += out.assignment.demotions.len();
        breaks += out.assignment.cycle_breaks.len();
    }
    Ok(format!("{SOUNDNESS_SCENARIOS} runs; {demotions} demotions, {breaks} of them after unsettled price rounds"))
}

fn sweep_reproducible() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"sweep": {"n_min": 1, "n_max": 8, "runs": 5, "seed": 11}}"#)
        .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_platoon-match"))
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("sweep exited with {}", status.status));
        }
        outputs.push(std::fs::read(out.join("sweep.csv")).map_err(|e| e.to_string())?);
    }
    if outputs[0] != outputs[1] {
        return Err("CSV outputs differ".into());
    }
    Ok(format!("two sweeps, {} identical bytes", outputs[0].len()))
}

fn timed(limit: Option<Duration>, check: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let result = check();
    let elapsed = start.elapsed();
    match (result, limit) {
        (Ok(detail), Some(limit)) if elapsed > limit => {
            Err(format!("{detail}; took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
        }
        (Ok(detail), _) => Ok(format!("{detail} ({:.1}s)", elapsed.as_secs_f64())),
        (Err(e), _) => Err(e),
    }
}

fn main() {
    let minute = Duration::from_secs(60);
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    results.push((1, "equilibrium soundness", timed(Some(minute), equilibrium_soundness)));
    results.push((2, "oracle equivalence", timed(Some(minute), oracle_equivalence)));
    results.push((3, "formula identities", timed(None, formula_identities)));
    let start = Instant::now();
    let paired = Paired::collect();
    let paired_time = start.elapsed();
    match &paired {
        Ok(p) => {
            let limit = 2 * minute;
            let over = (paired_time > limit)
                .then(|| format!("; paired runs took {:.1}s, limit 120s", paired_time.as_secs_f64()));
            let ordering = utility_ordering(p).and_then(|d| match &over {
                Some(o) => Err(format!("{d}{o}")),
                None => Ok(format!("{d} ({:.1}s)", paired_time.as_secs_f64())),
            });
            results.push((4, "utility ordering", ordering));
            results.push((5, "follower ordering", follower_ordering(p)));
        }
        Err(e) => {
            results.push((4, "utility ordering", Err(e.clone())));
            results.push((5, "follower ordering", Err(e.clone())));
        }
    }
    results.push((6, "cooperative convergence", timed(None, cooperative_never_cycles)));
    results.push((7, "market structure", timed(None, market_structure)));
    results.push((8, "sweep reproducibility", timed(None, sweep_reproducible)));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n} {name}: PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
