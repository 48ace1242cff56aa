//! One entry point per distribution model: build its game, solve it, and
//! evaluate everyone's utility at the solution.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{
    cooperative_leaders, cooperative_shares, draw_even_out_leaders, even_out_unchecked, role_of, score_leaders,
    score_unchecked, LeaderAssignment, Role, ScoreState,
};
use crate::equilibrium::{
    best_response_iteration, traced_best_response_iteration, DepartureGame, IterationReport, DEFAULT_MAX_SWEEPS,
};
use crate::error::{Error, Result};
use crate::market::{market_outcome, MarketOutcome, MarketParams};
use crate::money::Money;
use crate::scenario::{DepartureProfile, Scenario, VehicleId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    EvenOut,
    Score,
    Market,
    Cooperative,
    Spontaneous,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::EvenOut, Model::Score, Model::Market, Model::Cooperative, Model::Spontaneous];

    pub fn tag(self) -> &'static str {
        match self {
            Model::EvenOut => "even_out",
            Model::Score => "score",
            Model::Market => "market",
            Model::Cooperative => "cooperative",
            Model::Spontaneous => "spontaneous",
        }
    }

    /// Stable index used when deriving per-model seeds.
    pub fn ordinal(self) -> u64 {
        Model::ALL.iter().position(|&m| m == self).expect("listed") as u64
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL.into_iter().find(|m| m.tag() == s.trim()).ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Knobs shared by every model.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub max_sweeps: usize,
    /// Scores for the score system; drawn from `seed` when absent.
    pub scores: Option<ScoreState>,
    pub market: MarketParams,
    /// Seeds score draws and the reported even-out leader draw.
    pub seed: u64,
    pub trace: bool,
}

impl SolveOptions {
    pub fn new(price_grid: Vec<Money>) -> Self {
        SolveOptions {
            max_sweeps: DEFAULT_MAX_SWEEPS,
            scores: None,
            market: MarketParams::new(price_grid),
            seed: 0,
            trace: false,
        }
    }

    /// Options matching a scenario's standard follower profit: prices at
    /// 1/5 to 4/5 of it.
    pub fn standard(scenario: &Scenario) -> Self {
        let base = scenario.standard_profit_follower();
        SolveOptions::new((1..=4).map(|k| base * crate::money::frac(k, 5)).collect())
    }
}

/// A solved game.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub model: Model,
    pub profile: DepartureProfile,
    pub utilities: Vec<Money>,
    pub leaders: LeaderAssignment,
    pub roles: Vec<Role>,
    /// Number of vehicles riding as followers.
    pub followers: usize,
    pub converged: bool,
    /// Best-response report for the departure-time games.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<IterationReport<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreState>,
}

impl Solution {
    pub fn total_utility(&self) -> Money {
        self.utilities.iter().sum()
    }

    pub fn mean_utility(&self) -> Money {
        self.total_utility() / self.utilities.len() as i64
    }

    pub fn cycle_detected(&self) -> bool {
        let market_cycle = self.market.as_ref().is_some_and(|m| m.assignment.reports.iter().any(|r| r.cycle_detected));
        market_cycle || self.iteration.as_ref().is_some_and(|r| r.cycle_detected)
    }

    pub fn sweeps(&self) -> usize {
        match (&self.iteration, &self.market) {
            (Some(r), _) => r.sweeps,
            (None, Some(m)) => m.assignment.reports.iter().map(|r| r.sweeps).sum(),
            _ => 0,
        }
    }
}

fn platoon_followers(profile: &DepartureProfile) -> usize {
    profile.platoons().values().map(|m| m.len().saturating_sub(1)).sum()
}

fn roles(profile: &DepartureProfile, leaders: &LeaderAssignment) -> Vec<Role> {
    (0..profile.len()).map(|i| role_of(VehicleId::from_index(i), profile, leaders)).collect()
}

fn run_iteration(game: &DepartureGame<'_>, options: &SolveOptions) -> Result<IterationReport<i64>> {
    let start = game.default_profile();
    if options.trace {
        traced_best_response_iteration(game, &start, options.max_sweeps)
    } else {
        best_response_iteration(game, &start, options.max_sweeps)
    }
}

/// Solves `model` on `scenario`. Departure-time games run best-response
/// iteration from the default profile; the market runs seller assignment;
/// spontaneous platooning keeps everyone at its default.
pub fn solve(model: Model, scenario: &Scenario, options: &SolveOptions) -> Result<Solution> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    match model {
        Model::EvenOut | Model::Spontaneous => {
            let (profile, iteration) = if model == Model::EvenOut {
                let report = run_iteration(&DepartureGame::even_out(scenario), options)?;
                (DepartureProfile::new(report.final_profile.clone()), Some(report))
            } else {
                (scenario.default_profile(), None)
            };
            let utilities = (0..scenario.len()).map(|i| even_out_unchecked(scenario, &profile.departures, i)).collect();
            let leaders = draw_even_out_leaders(&profile, &mut rng);
            Ok(Solution {
                model,
                roles: roles(&profile, &leaders),
                followers: platoon_followers(&profile),
                converged: iteration.as_ref().is_none_or(|r| r.converged),
                profile,
                utilities,
                leaders,
                iteration,
                market: None,
                scores: None,
            })
        }
        Model::Score => {
            let scores = match &options.scores {
                Some(s) => s.clone(),
                None => ScoreState::random(scenario.len(), &mut rng),
            };
            let game = DepartureGame::score(scenario, &scores)?;
            let report = run_iteration(&game, options)?;
            let profile = DepartureProfile::new(report.final_profile.clone());
            let utilities =
                (0..scenario.len()).map(|i| score_unchecked(scenario, &scores, &profile.departures, i)).collect();
            let leaders = score_leaders(&profile, &scores)?;
            Ok(Solution {
                model,
                roles: roles(&profile, &leaders),
                followers: platoon_followers(&profile),
                converged: report.converged,
                profile,
                utilities,
                leaders,
                iteration: Some(report),
                market: None,
                scores: Some(scores),
            })
        }
        Model::Cooperative => {
            let report = run_iteration(&DepartureGame::cooperative(scenario), options)?;
            let profile = DepartureProfile::new(report.final_profile.clone());
            let utilities = cooperative_shares(scenario, &profile.departures);
            let leaders = cooperative_leaders(&profile, scenario)?;
            Ok(Solution {
                model,
                roles: roles(&profile, &leaders),
                followers: platoon_followers(&profile),
                converged: report.converged,
                profile,
                utilities,
                leaders,
                iteration: Some(report),
                market: None,
                scores: None,
            })
        }
        Model::Market => {
            let outcome = market_outcome(scenario, &options.market)?;
            let profile = outcome.profile.clone();
            Ok(Solution {
                model,
                roles: roles(&profile, &outcome.leaders),
                followers: outcome.follower_count(),
                converged: outcome.assignment.converged,
                utilities: outcome.utilities.clone(),
                leaders: outcome.leaders.clone(),
                profile,
                iteration: None,
                market: Some(outcome),
                scores: None,
            })
        }
    }
}
