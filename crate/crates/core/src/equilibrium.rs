//! Finite games, pure Nash equilibria, best-response dynamics and the
//! brute-force oracles used to check them.

use std::collections::HashSet;
use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::distribution::{check_scores, cooperative_unchecked, even_out_unchecked, score_unchecked, ScoreState};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::scenario::{DepartureProfile, Scenario, VehicleId};

/// Sweep cap used when callers have no preference.
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Largest joint decision space the oracles will enumerate by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// A finite game in normal form. Players are `0..players()`.
pub trait Game {
    type Decision: Clone + Eq + Ord + Hash + Debug;

    fn players(&self) -> usize;

    /// Nonempty, ordered decision space of `player`.
    fn decisions(&self, player: usize) -> &[Self::Decision];

    /// Utility of `player` at the joint `profile`.
    fn utility(&self, player: usize, profile: &[Self::Decision]) -> Money;

    /// A maximizer of `player`'s utility with everyone else fixed.
    ///
    /// The default keeps the current decision when it is already optimal
    /// and otherwise returns the earliest maximizer in decision order.
    fn best_response(&self, player: usize, profile: &[Self::Decision]) -> Self::Decision {
        stay_if_optimal_best_response(self, player, profile)
    }
}

/// Evaluates `player`'s utility for each of its decisions, others fixed.
pub fn deviation_utilities<G: Game + ?Sized>(
    game: &G,
    player: usize,
    profile: &[G::Decision],
) -> Vec<(G::Decision, Money)> {
    let mut scratch = profile.to_vec();
    game.decisions(player)
        .iter()
        .map(|d| {
            scratch[player] = d.clone();
            (d.clone(), game.utility(player, &scratch))
        })
        .collect()
}

pub fn stay_if_optimal_best_response<G: Game + ?Sized>(
    game: &G,
    player: usize,
    profile: &[G::Decision],
) -> G::Decision {
    let options = deviation_utilities(game, player, profile);
    let best = options.iter().map(|(_, u)| *u).max().expect("nonempty decision space");
    let current = &profile[player];
    if options.iter().any(|(d, u)| d == current && *u == best) {
        return current.clone();
    }
    options.into_iter().find(|(_, u)| *u == best).map(|(d, _)| d).expect("a maximizer exists")
}

/// Best response of `player` given the other entries of `profile`.
pub fn best_response<G: Game + ?Sized>(game: &G, player: usize, profile: &[G::Decision]) -> G::Decision {
    game.best_response(player, profile)
}

/// A player who gains strictly by deviating, with the gaining decision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deviation<D> {
    pub player: usize,
    pub decision: D,
    pub gain: Money,
}

/// First strictly profitable unilateral deviation, if any.
pub fn find_deviation<G: Game + ?Sized>(game: &G, profile: &[G::Decision]) -> Option<Deviation<G::Decision>> {
    for player in 0..game.players() {
        let current = game.utility(player, profile);
        for (decision, u) in deviation_utilities(game, player, profile) {
            if u > current {
                return Some(Deviation { player, decision, gain: u - current });
            }
        }
    }
    None
}

/// Exhaustive deviation scan: no player gains strictly by moving alone.
pub fn is_nash<G: Game + ?Sized>(game: &G, profile: &[G::Decision]) -> bool {
    find_deviation(game, profile).is_none()
}

/// Outcome of best-response iteration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationReport<D> {
    pub converged: bool,
    /// Sweeps executed, including the final sweep that changed nothing.
    pub sweeps: usize,
    pub final_profile: Vec<D>,
    /// Profile after every sweep, when tracing was requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<Vec<D>>,
    pub cycle_detected: bool,
}

fn check_profile<G: Game + ?Sized>(game: &G, profile: &[G::Decision]) -> Result<()> {
    if profile.len() != game.players() {
        return Err(Error::InvalidProfile(format!("{} decisions for {} players", profile.len(), game.players())));
    }
    for (player, d) in profile.iter().enumerate() {
        if !game.decisions(player).contains(d) {
            return Err(Error::InvalidProfile(format!("player {player} cannot choose {d:?}")));
        }
    }
    Ok(())
}

/// Round-robin best-response dynamics: sweep players in order, each
/// replacing its decision in place, until a sweep changes nothing. Stops
/// early at `max_sweeps` or when an end-of-sweep profile repeats.
pub fn best_response_iteration<G: Game + ?Sized>(
    game: &G,
    initial: &[G::Decision],
    max_sweeps: usize,
) -> Result<IterationReport<G::Decision>> {
    iterate(game, initial, max_sweeps, false)
}

/// [`best_response_iteration`] recording the profile after each sweep.
pub fn traced_best_response_iteration<G: Game + ?Sized>(
    game: &G,
    initial: &[G::Decision],
    max_sweeps: usize,
) -> Result<IterationReport<G::Decision>> {
    iterate(game, initial, max_sweeps, true)
}

fn iterate<G: Game + ?Sized>(
    game: &G,
    initial: &[G::Decision],
    max_sweeps: usize,
    trace: bool,
) -> Result<IterationReport<G::Decision>> {
    if max_sweeps == 0 {
        return Err(Error::Config("max_sweeps must be at least 1".into()));
    }
    check_profile(game, initial)?;
    let mut profile = initial.to_vec();
    let mut seen: HashSet<Vec<G::Decision>> = HashSet::from([profile.clone()]);
    let mut report = IterationReport {
        converged: false,
        sweeps: 0,
        final_profile: Vec::new(),
        trace: Vec::new(),
        cycle_detected: false,
    };
    while report.sweeps < max_sweeps {
        report.sweeps += 1;
        let mut changed = false;
        for player in 0..game.players() {
            let next = game.best_response(player, &profile);
            if next != profile[player] {
                profile[player] = next;
                changed = true;
            }
        }
        if trace {
            report.trace.push(profile.clone());
        }
        if !changed {
            report.converged = true;
            break;
        }
        if !seen.insert(profile.clone()) {
            report.cycle_detected = true;
            break;
        }
    }
    report.final_profile = profile;
    Ok(report)
}

/// Size of the joint decision space, saturating.
pub fn profile_space_size<G: Game + ?Sized>(game: &G) -> u128 {
    (0..game.players()).map(|p| game.decisions(p).len() as u128).fold(1u128, |acc, n| acc.saturating_mul(n))
}

/// Visits every joint profile in lexicographic order of decision indices.
fn for_each_profile<G: Game + ?Sized>(game: &G, cap: u128, mut visit: impl FnMut(&[G::Decision])) -> Result<()> {
    let size = profile_space_size(game);
    if size > cap {
        return Err(Error::EnumerationCap { size, cap });
    }
    let players = game.players();
    if (0..players).any(|p| game.decisions(p).is_empty()) {
        return Ok(());
    }
    let mut cursor = vec![0usize; players];
    let mut profile: Vec<G::Decision> = (0..players).map(|p| game.decisions(p)[0].clone()).collect();
    loop {
        visit(&profile);
        let mut p = players;
        loop {
            if p == 0 {
                return Ok(());
            }
            p -= 1;
            cursor[p] += 1;
            if cursor[p] < game.decisions(p).len() {
                profile[p] = game.decisions(p)[cursor[p]].clone();
                break;
            }
            cursor[p] = 0;
            profile[p] = game.decisions(p)[0].clone();
        }
    }
}

/// All pure Nash equilibria, by exhaustive enumeration.
pub fn enumerate_equilibria<G: Game + ?Sized>(game: &G, cap: u128) -> Result<Vec<Vec<G::Decision>>> {
    let mut found = Vec::new();
    for_each_profile(game, cap, |profile| {
        if is_nash(game, profile) {
            found.push(profile.to_vec());
        }
    })?;
    Ok(found)
}

/// Which departure-time utility a [`DepartureGame`] uses.
#[derive(Clone, Copy, Debug)]
pub enum DepartureModel<'a> {
    EvenOut,
    /// Scores stay fixed while the game is played.
    Score(&'a ScoreState),
    /// Every player receives the fleet-wide utility.
    Cooperative,
}

/// A platoon-matching game where vehicles choose departure times.
#[derive(Clone, Debug)]
pub struct DepartureGame<'a> {
    scenario: &'a Scenario,
    model: DepartureModel<'a>,
    spaces: Vec<Vec<i64>>,
}

impl<'a> DepartureGame<'a> {
    pub fn new(scenario: &'a Scenario, model: DepartureModel<'a>) -> Result<Self> {
        if let DepartureModel::Score(scores) = model {
            check_scores(scores, scenario)?;
        }
        let spaces = scenario.ids().map(|id| scenario.feasible_departures(id)).collect::<Result<Vec<_>>>()?;
        Ok(DepartureGame { scenario, model, spaces })
    }

    pub fn even_out(scenario: &'a Scenario) -> Self {
        Self::new(scenario, DepartureModel::EvenOut).expect("even-out game over a valid scenario")
    }

    pub fn score(scenario: &'a Scenario, scores: &'a ScoreState) -> Result<Self> {
        Self::new(scenario, DepartureModel::Score(scores))
    }

    pub fn cooperative(scenario: &'a Scenario) -> Self {
        Self::new(scenario, DepartureModel::Cooperative).expect("cooperative game over a valid scenario")
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn model(&self) -> DepartureModel<'a> {
        self.model
    }

    /// Algorithm start: everyone at its default.
    pub fn default_profile(&self) -> Vec<i64> {
        self.scenario.default_times()
    }

    pub fn solve(&self, max_sweeps: usize) -> IterationReport<i64> {
        best_response_iteration(self, &self.default_profile(), max_sweeps).expect("default profile is always feasible")
    }
}

impl Game for DepartureGame<'_> {
    type Decision = i64;

    fn players(&self) -> usize {
        self.spaces.len()
    }

    fn decisions(&self, player: usize) -> &[i64] {
        &self.spaces[player]
    }

    fn utility(&self, player: usize, profile: &[i64]) -> Money {
        match self.model {
            DepartureModel::EvenOut => even_out_unchecked(self.scenario, profile, player),
            DepartureModel::Score(scores) => score_unchecked(self.scenario, scores, profile, player),
            DepartureModel::Cooperative => cooperative_unchecked(self.scenario, profile),
        }
    }
}

/// Exhaustive maximizer of the cooperative utility. Among equal values
/// the lexicographically smallest profile wins.
pub fn social_optimum(scenario: &Scenario, cap: u128) -> Result<(DepartureProfile, Money)> {
    let game = DepartureGame::cooperative(scenario);
    let mut best: Option<(Vec<i64>, Money)> = None;
    for_each_profile(&game, cap, |profile| {
        let value = cooperative_unchecked(scenario, profile);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((profile.to_vec(), value));
        }
    })?;
    let (profile, value) = best.expect("decision spaces are nonempty");
    Ok((DepartureProfile::new(profile), value))
}

/// Convenience: best response for a vehicle id in a departure game.
pub fn best_departure(game: &DepartureGame<'_>, id: VehicleId, profile: &DepartureProfile) -> i64 {
    game.best_response(id.index(), &profile.departures)
}
