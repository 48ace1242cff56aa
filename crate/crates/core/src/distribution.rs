//! Profit-distribution models that act on departure profiles: even out,
//! score system, cooperative, and the spontaneous baseline.
//!
//! Each model turns a [`DepartureProfile`] into per-vehicle utilities. All
//! of them share the same grouping rule: vehicles choosing the same minute
//! form one platoon, and a platoon of one is a solo vehicle with no profit
//! from platooning.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::{frac, Fraction, Money};
use crate::scenario::{platoons_of, DepartureProfile, Scenario, VehicleId};

/// Role of a vehicle inside its platoon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Solo,
    Leader,
    Follower,
}

/// Per-vehicle scores, pairwise distinct.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Money>", into = "Vec<Money>")]
pub struct ScoreState {
    scores: Vec<Fraction>,
}

/// Nudge applied to a colliding score.
pub fn score_tie_nudge() -> Fraction {
    frac(1, 1_000_000_000)
}

impl ScoreState {
    /// Fails if two scores coincide.
    pub fn new(scores: Vec<Fraction>) -> Result<Self> {
        let distinct: BTreeSet<&Fraction> = scores.iter().collect();
        if distinct.len() != scores.len() {
            return Err(Error::InvalidScores("scores must be pairwise distinct".into()));
        }
        Ok(ScoreState { scores })
    }

    /// Accepts colliding scores and separates them: a vehicle whose score
    /// equals that of a lower id is raised by `1e-9` until unique.
    pub fn perturbed(mut scores: Vec<Fraction>) -> Self {
        let mut seen = BTreeSet::new();
        for s in scores.iter_mut() {
            while seen.contains(s) {
                *s += score_tie_nudge();
            }
            seen.insert(*s);
        }
        ScoreState { scores }
    }

    /// Uniform draws on `[0, 1)` with a resolution of `2^-32`, rejecting
    /// collisions.
    pub fn random<R: Rng>(vehicles: usize, rng: &mut R) -> Self {
        let mut seen = BTreeSet::new();
        let mut scores = Vec::with_capacity(vehicles);
        while scores.len() < vehicles {
            let k: u32 = rng.gen();
            if seen.insert(k) {
                scores.push(frac(k as i128, 1i128 << 32));
            }
        }
        ScoreState { scores }
    }

    pub fn score(&self, id: VehicleId) -> Fraction {
        self.scores[id.index()]
    }

    pub fn scores(&self) -> &[Fraction] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl TryFrom<Vec<Money>> for ScoreState {
    type Error = Error;
    fn try_from(values: Vec<Money>) -> Result<Self> {
        ScoreState::new(values.into_iter().map(|m| m.value()).collect())
    }
}

impl From<ScoreState> for Vec<Money> {
    fn from(state: ScoreState) -> Self {
        state.scores.into_iter().map(Money::new).collect()
    }
}

/// Leader of every platoon with more than one member, keyed by departure.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderAssignment {
    pub leaders: BTreeMap<i64, VehicleId>,
}

impl LeaderAssignment {
    pub fn leader_at(&self, departure: i64) -> Option<VehicleId> {
        self.leaders.get(&departure).copied()
    }

    pub fn is_leader(&self, id: VehicleId) -> bool {
        self.leaders.values().any(|&l| l == id)
    }
}

fn check_platoon_size(n: usize) -> Result<()> {
    if n <= 1 {
        return Err(Error::PlatoonTooSmall(n));
    }
    Ok(())
}

fn size_fraction(numer: usize, n: usize) -> Fraction {
    frac(numer as i128, n as i128)
}

/// Leader's profit after receiving the standardized transfer from its
/// `n - 1` followers.
pub fn transaction_profit_leader(id: VehicleId, n: usize, scenario: &Scenario) -> Result<Money> {
    check_platoon_size(n)?;
    let v = scenario.vehicle(id)?;
    let gap = scenario.standard_profit_follower() - scenario.standard_profit_leader();
    Ok(v.profit_leader + gap * size_fraction(n - 1, n))
}

/// Follower's profit after paying `(R^f - R^l) / n` to the leader.
pub fn transaction_profit_follower(id: VehicleId, n: usize, scenario: &Scenario) -> Result<Money> {
    check_platoon_size(n)?;
    let v = scenario.vehicle(id)?;
    let gap = scenario.standard_profit_follower() - scenario.standard_profit_leader();
    Ok(v.profit_follower - gap * size_fraction(1, n))
}

fn platoon_size(departures: &[i64], index: usize) -> usize {
    let d = departures[index];
    departures.iter().filter(|&&x| x == d).count()
}

fn penalty_at(scenario: &Scenario, index: usize, departure: i64) -> Money {
    let v = &scenario.vehicles()[index];
    v.penalty_rate * (departure - v.default_departure)
}

pub(crate) fn even_out_unchecked(scenario: &Scenario, departures: &[i64], index: usize) -> Money {
    let v = &scenario.vehicles()[index];
    let n = platoon_size(departures, index);
    let penalty = penalty_at(scenario, index, departures[index]);
    if n > 1 {
        v.profit_leader * size_fraction(1, n) + v.profit_follower * size_fraction(n - 1, n) - penalty
    } else {
        -penalty
    }
}

fn checked(profile: &DepartureProfile, scenario: &Scenario, id: VehicleId) -> Result<()> {
    scenario.vehicle(id)?;
    profile.validate(scenario)
}

/// Expected utility under the even-out model, averaging over the uniform
/// leader draw: `R^l/n + (n-1) R^f / n - B(d)` in a platoon, `-B(d)` alone.
pub fn utility_even_out(id: VehicleId, profile: &DepartureProfile, scenario: &Scenario) -> Result<Money> {
    checked(profile, scenario, id)?;
    Ok(even_out_unchecked(scenario, &profile.departures, id.index()))
}

/// Draws one realized leader per platoon, uniformly. Utilities never
/// depend on this draw; it only serves reporting.
pub fn draw_even_out_leaders<R: Rng>(profile: &DepartureProfile, rng: &mut R) -> LeaderAssignment {
    let leaders = profile
        .platoons()
        .into_iter()
        .filter(|(_, members)| members.len() > 1)
        .map(|(t, members)| (t, members[rng.gen_range(0..members.len())]))
        .collect();
    LeaderAssignment { leaders }
}

/// The lowest-scored member leads.
pub fn score_leader(members: &[VehicleId], scores: &ScoreState) -> Result<VehicleId> {
    check_platoon_size(members.len())?;
    members.iter().copied().min_by_key(|&id| scores.score(id)).ok_or(Error::PlatoonTooSmall(0))
}

/// `(leader gain, follower loss)` in score units for a platoon of `n`:
/// `((n-1)/n, 1/n)`. Both are positive; followers subtract theirs.
pub fn score_updates(n: usize) -> Result<(Fraction, Fraction)> {
    check_platoon_size(n)?;
    Ok((size_fraction(n - 1, n), size_fraction(1, n)))
}

pub(crate) fn score_unchecked(scenario: &Scenario, scores: &ScoreState, departures: &[i64], index: usize) -> Money {
    let v = &scenario.vehicles()[index];
    let d = departures[index];
    let penalty = penalty_at(scenario, index, d);
    let mut n = 0usize;
    let mut lowest = true;
    let own = scores.scores[index];
    for (k, &x) in departures.iter().enumerate() {
        if x == d {
            n += 1;
            if k != index && scores.scores[k] < own {
                lowest = false;
            }
        }
    }
    if n <= 1 {
        return -penalty;
    }
    if lowest {
        v.profit_leader - penalty + v.score_valuation * size_fraction(n - 1, n)
    } else {
        v.profit_follower - penalty - v.score_valuation * size_fraction(1, n)
    }
}

/// Utility under the score system with scores held fixed.
pub fn utility_score(
    id: VehicleId,
    profile: &DepartureProfile,
    scores: &ScoreState,
    scenario: &Scenario,
) -> Result<Money> {
    checked(profile, scenario, id)?;
    check_scores(scores, scenario)?;
    Ok(score_unchecked(scenario, scores, &profile.departures, id.index()))
}

pub(crate) fn check_scores(scores: &ScoreState, scenario: &Scenario) -> Result<()> {
    if scores.len() != scenario.len() {
        return Err(Error::InvalidScores(format!("{} scores for {} vehicles", scores.len(), scenario.len())));
    }
    Ok(())
}

/// Leaders per platoon under the score rule.
pub fn score_leaders(profile: &DepartureProfile, scores: &ScoreState) -> Result<LeaderAssignment> {
    let mut leaders = BTreeMap::new();
    for (t, members) in profile.platoons() {
        if members.len() > 1 {
            leaders.insert(t, score_leader(&members, scores)?);
        }
    }
    Ok(LeaderAssignment { leaders })
}

/// Scores after one departure round: leaders gain `(n-1)/n`, followers
/// lose `1/n`, solo vehicles keep theirs.
pub fn apply_score_updates(profile: &DepartureProfile, scores: &ScoreState, scenario: &Scenario) -> Result<ScoreState> {
    profile.validate(scenario)?;
    check_scores(scores, scenario)?;
    let mut next = scores.scores.clone();
    for members in profile.platoons().into_values() {
        if members.len() < 2 {
            continue;
        }
        let (gain, loss) = score_updates(members.len())?;
        let leader = score_leader(&members, scores)?;
        for id in members {
            if id == leader {
                next[id.index()] += gain;
            } else {
                next[id.index()] -= loss;
            }
        }
    }
    Ok(ScoreState::perturbed(next))
}

/// Member with the smallest `R^f - R^l`; ties go to the lowest id.
pub fn cooperative_leader(members: &[VehicleId], scenario: &Scenario) -> Result<VehicleId> {
    check_platoon_size(members.len())?;
    let mut best: Option<(Money, VehicleId)> = None;
    for &id in members {
        let cost = scenario.vehicle(id)?.leading_cost();
        best = match best {
            Some((c, b)) if c < cost || (c == cost && b < id) => Some((c, b)),
            _ => Some((cost, id)),
        };
    }
    Ok(best.map(|(_, id)| id).expect("nonempty"))
}

/// Leaders per platoon under the cooperative rule.
pub fn cooperative_leaders(profile: &DepartureProfile, scenario: &Scenario) -> Result<LeaderAssignment> {
    let mut leaders = BTreeMap::new();
    for (t, members) in profile.platoons() {
        if members.len() > 1 {
            leaders.insert(t, cooperative_leader(&members, scenario)?);
        }
    }
    Ok(LeaderAssignment { leaders })
}

/// Per-vehicle share `b_i - B_i(d_i)` of the cooperative welfare.
pub(crate) fn cooperative_shares(scenario: &Scenario, departures: &[i64]) -> Vec<Money> {
    let mut shares = vec![Money::ZERO; departures.len()];
    for members in platoons_of(departures).into_values() {
        if members.len() > 1 {
            let leader = cooperative_leader(&members, scenario).expect("platoon of two or more");
            for id in members {
                let v = &scenario.vehicles()[id.index()];
                shares[id.index()] = if id == leader { v.profit_leader } else { v.profit_follower };
            }
        }
    }
    for (index, share) in shares.iter_mut().enumerate() {
        *share -= penalty_at(scenario, index, departures[index]);
    }
    shares
}

pub(crate) fn cooperative_unchecked(scenario: &Scenario, departures: &[i64]) -> Money {
    cooperative_shares(scenario, departures).into_iter().sum()
}

/// Fleet-wide profit minus penalties, with each platoon led by its
/// cheapest leader.
pub fn utility_cooperative(profile: &DepartureProfile, scenario: &Scenario) -> Result<Money> {
    profile.validate(scenario)?;
    Ok(cooperative_unchecked(scenario, &profile.departures))
}

/// Everyone leaves at its default; shared defaults platoon by accident and
/// split profit as in the even-out model.
pub fn spontaneous_outcome(scenario: &Scenario) -> (DepartureProfile, Vec<Money>) {
    let profile = scenario.default_profile();
    let utilities = (0..scenario.len()).map(|index| even_out_unchecked(scenario, &profile.departures, index)).collect();
    (profile, utilities)
}

/// Role of vehicle `id` given a leader assignment.
pub fn role_of(id: VehicleId, profile: &DepartureProfile, leaders: &LeaderAssignment) -> Role {
    let d = profile.departure(id);
    match leaders.leader_at(d) {
        None => Role::Solo,
        Some(l) if l == id => Role::Leader,
        Some(_) => Role::Follower,
    }
}
