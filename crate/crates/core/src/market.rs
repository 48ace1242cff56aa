//! The market model: sellers leave at their defaults and post follower
//! prices, buyers follow whichever seller pays off best (or leave alone),
//! and sellers compete on price.
//!
//! A buyer `j` can follow seller `i` only when `d_i*` lies in `j`'s delay
//! window. Following earns `R_j^f - p_i - B_j(d_i*)`; leaving alone earns 0.
//! Ties prefer leaving alone, then the earliest seller time, then the lowest
//! seller id. A buyer leaving alone is never counted as a follower, even
//! when a seller happens to share its default time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::distribution::LeaderAssignment;
use crate::equilibrium::{best_response_iteration, deviation_utilities, Game, IterationReport, DEFAULT_MAX_SWEEPS};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::scenario::{DepartureProfile, Scenario, VehicleId};

/// Seller/buyer partition with the sellers' prices and price grids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketState {
    sellers: BTreeSet<VehicleId>,
    buyers: BTreeSet<VehicleId>,
    prices: BTreeMap<VehicleId, Money>,
    price_grid: BTreeMap<VehicleId, Vec<Money>>,
}

impl MarketState {
    /// Every vehicle not in `prices` is a buyer. Each seller needs a grid
    /// and a price on it; seller defaults must be pairwise distinct.
    pub fn new(
        scenario: &Scenario,
        prices: BTreeMap<VehicleId, Money>,
        price_grid: BTreeMap<VehicleId, Vec<Money>>,
    ) -> Result<Self> {
        let mut times = BTreeSet::new();
        for (&id, price) in &prices {
            let v = scenario.vehicle(id)?;
            if !times.insert(v.default_departure) {
                return Err(Error::InvalidMarket(format!(
                    "two sellers share default departure {}",
                    v.default_departure
                )));
            }
            let grid = price_grid.get(&id).ok_or(Error::EmptyPriceGrid(id))?;
            if grid.is_empty() {
                return Err(Error::EmptyPriceGrid(id));
            }
            if !grid.contains(price) {
                return Err(Error::InvalidMarket(format!("price {price} of seller {id} is off its grid")));
            }
        }
        let sellers: BTreeSet<VehicleId> = prices.keys().copied().collect();
        let buyers = scenario.ids().filter(|id| !sellers.contains(id)).collect();
        Ok(MarketState { sellers, buyers, prices, price_grid })
    }

    /// Same grid for every seller, all sellers priced at `price`.
    pub fn uniform(scenario: &Scenario, sellers: &[VehicleId], grid: &[Money], price: Money) -> Result<Self> {
        let prices = sellers.iter().map(|&id| (id, price)).collect();
        let grids = sellers.iter().map(|&id| (id, grid.to_vec())).collect();
        MarketState::new(scenario, prices, grids)
    }

    pub fn sellers(&self) -> &BTreeSet<VehicleId> {
        &self.sellers
    }

    pub fn buyers(&self) -> &BTreeSet<VehicleId> {
        &self.buyers
    }

    pub fn prices(&self) -> &BTreeMap<VehicleId, Money> {
        &self.prices
    }

    pub fn price(&self, seller: VehicleId) -> Option<Money> {
        self.prices.get(&seller).copied()
    }

    pub fn grid(&self, seller: VehicleId) -> &[Money] {
        self.price_grid.get(&seller).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Copy with one seller's price replaced.
    pub fn with_price(&self, seller: VehicleId, price: Money) -> Result<Self> {
        if !self.sellers.contains(&seller) {
            return Err(Error::NotASeller(seller));
        }
        if !self.grid(seller).contains(&price) {
            return Err(Error::InvalidMarket(format!("price {price} of seller {seller} is off its grid")));
        }
        let mut next = self.clone();
        next.prices.insert(seller, price);
        Ok(next)
    }

    fn require_buyer(&self, id: VehicleId) -> Result<()> {
        if self.buyers.contains(&id) {
            Ok(())
        } else {
            Err(Error::NotABuyer(id))
        }
    }

    fn require_seller(&self, id: VehicleId) -> Result<()> {
        if self.sellers.contains(&id) {
            Ok(())
        } else {
            Err(Error::NotASeller(id))
        }
    }
}

/// What a buyer does at given prices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuyerChoice {
    Alone,
    Follow(VehicleId),
}

/// Sellers ordered by default departure, with their current price.
struct Offers {
    by_time: Vec<(i64, VehicleId, Money)>,
}

impl Offers {
    fn new(scenario: &Scenario, prices: impl IntoIterator<Item = (VehicleId, Money)>) -> Self {
        let mut by_time: Vec<(i64, VehicleId, Money)> =
            prices.into_iter().map(|(id, p)| (scenario.vehicles()[id.index()].default_departure, id, p)).collect();
        by_time.sort();
        Offers { by_time }
    }

    fn choose(&self, scenario: &Scenario, buyer: VehicleId) -> BuyerChoice {
        let v = &scenario.vehicles()[buyer.index()];
        let start = self.by_time.partition_point(|&(t, _, _)| t < v.default_departure);
        let mut best = (Money::ZERO, BuyerChoice::Alone);
        for &(t, seller, price) in &self.by_time[start..] {
            if t > v.latest_departure() {
                break;
            }
            let gain = v.profit_follower - price - v.penalty_rate * (t - v.default_departure);
            if gain > best.0 {
                best = (gain, BuyerChoice::Follow(seller));
            }
        }
        best.1
    }
}

/// Departure options of buyer `j`: seller defaults inside its delay
/// window, plus its own default.
pub fn buyer_options(j: VehicleId, market: &MarketState, scenario: &Scenario) -> Result<Vec<i64>> {
    market.require_buyer(j)?;
    let v = scenario.vehicle(j)?;
    let mut times: BTreeSet<i64> = market
        .sellers
        .iter()
        .map(|&s| scenario.vehicles()[s.index()].default_departure)
        .filter(|t| (v.default_departure..=v.latest_departure()).contains(t))
        .collect();
    times.insert(v.default_departure);
    Ok(times.into_iter().collect())
}

/// Whom buyer `j` follows at the market's current prices.
pub fn buyer_choice(j: VehicleId, market: &MarketState, scenario: &Scenario) -> Result<BuyerChoice> {
    market.require_buyer(j)?;
    scenario.vehicle(j)?;
    let offers = Offers::new(scenario, market.prices.iter().map(|(&k, &v)| (k, v)));
    Ok(offers.choose(scenario, j))
}

/// Most profitable departure of buyer `j`.
pub fn buyer_best_departure(j: VehicleId, market: &MarketState, scenario: &Scenario) -> Result<i64> {
    Ok(match buyer_choice(j, market, scenario)? {
        BuyerChoice::Alone => scenario.vehicle(j)?.default_departure,
        BuyerChoice::Follow(seller) => scenario.vehicles()[seller.index()].default_departure,
    })
}

/// Buyer `j`'s profit from a choice at the market's prices.
pub fn buyer_utility(j: VehicleId, choice: BuyerChoice, market: &MarketState, scenario: &Scenario) -> Result<Money> {
    let v = scenario.vehicle(j)?;
    Ok(match choice {
        BuyerChoice::Alone => Money::ZERO,
        BuyerChoice::Follow(seller) => {
            let price = market.price(seller).ok_or(Error::NotASeller(seller))?;
            let t = scenario.vehicle(seller)?.default_departure;
            v.profit_follower - price - v.penalty_rate * (t - v.default_departure)
        }
    })
}

/// Buyers following seller `i`.
pub fn followers(i: VehicleId, market: &MarketState, scenario: &Scenario) -> Result<BTreeSet<VehicleId>> {
    market.require_seller(i)?;
    let offers = Offers::new(scenario, market.prices.iter().map(|(&k, &v)| (k, v)));
    Ok(market.buyers.iter().copied().filter(|&j| offers.choose(scenario, j) == BuyerChoice::Follow(i)).collect())
}

fn seller_payoff(profit_leader: Money, followers: usize, price: Money) -> Money {
    if followers == 0 {
        Money::ZERO
    } else {
        profit_leader + price * followers as i64
    }
}

/// `R_i^l + |F_i| p_i` with followers, zero without.
pub fn seller_utility(i: VehicleId, market: &MarketState, scenario: &Scenario) -> Result<Money> {
    let count = followers(i, market, scenario)?.len();
    Ok(seller_payoff(scenario.vehicle(i)?.profit_leader, count, market.price(i).expect("seller has a price")))
}

/// Grid price maximizing seller `i`'s utility with other prices fixed;
/// the lowest such price on ties.
pub fn seller_best_response(i: VehicleId, market: &MarketState, scenario: &Scenario) -> Result<Money> {
    market.require_seller(i)?;
    if market.grid(i).is_empty() {
        return Err(Error::EmptyPriceGrid(i));
    }
    let game = MarketGame::from_state(scenario, market)?;
    let player = game.player_of(i).expect("seller is a player");
    Ok(game.best_response(player, &game.current_prices(market)))
}

/// The sellers' pricing game for a fixed seller set. Buyers are not
/// players; they re-optimize against every price vector.
#[derive(Clone, Debug)]
pub struct MarketGame<'a> {
    scenario: &'a Scenario,
    tie_rule: SellerTieRule,
    sellers: Vec<VehicleId>,
    buyers: Vec<VehicleId>,
    grids: Vec<Vec<Money>>,
}

impl<'a> MarketGame<'a> {
    pub fn from_state(scenario: &'a Scenario, market: &MarketState) -> Result<Self> {
        let sellers: Vec<VehicleId> = market.sellers.iter().copied().collect();
        let grids = sellers
            .iter()
            .map(|&id| {
                let mut grid = market.grid(id).to_vec();
                grid.sort();
                grid.dedup();
                if grid.is_empty() {
                    Err(Error::EmptyPriceGrid(id))
                } else {
                    Ok(grid)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MarketGame {
            scenario,
            tie_rule: SellerTieRule::LowestPrice,
            sellers,
            buyers: market.buyers.iter().copied().collect(),
            grids,
        })
    }

    pub fn with_tie_rule(mut self, tie_rule: SellerTieRule) -> Self {
        self.tie_rule = tie_rule;
        self
    }

    pub fn sellers(&self) -> &[VehicleId] {
        &self.sellers
    }

    pub fn player_of(&self, seller: VehicleId) -> Option<usize> {
        self.sellers.iter().position(|&s| s == seller)
    }

    /// The market's prices as a profile for this game.
    pub fn current_prices(&self, market: &MarketState) -> Vec<Money> {
        self.sellers.iter().map(|s| market.prices[s]).collect()
    }

    fn offers(&self, prices: &[Money]) -> Offers {
        Offers::new(self.scenario, self.sellers.iter().copied().zip(prices.iter().copied()))
    }

    /// Follower counts per player at `prices`.
    pub fn follower_counts(&self, prices: &[Money]) -> Vec<usize> {
        let offers = self.offers(prices);
        let mut counts = vec![0usize; self.sellers.len()];
        for &j in &self.buyers {
            if let BuyerChoice::Follow(s) = offers.choose(self.scenario, j) {
                counts[self.player_of(s).expect("offer from a player")] += 1;
            }
        }
        counts
    }
}

impl Game for MarketGame<'_> {
    type Decision = Money;

    fn players(&self) -> usize {
        self.sellers.len()
    }

    fn decisions(&self, player: usize) -> &[Money] {
        &self.grids[player]
    }

    fn utility(&self, player: usize, prices: &[Money]) -> Money {
        let seller = self.sellers[player];
        let offers = self.offers(prices);
        let count =
            self.buyers.iter().filter(|&&j| offers.choose(self.scenario, j) == BuyerChoice::Follow(seller)).count();
        seller_payoff(self.scenario.vehicles()[seller.index()].profit_leader, count, prices[player])
    }

    fn best_response(&self, player: usize, prices: &[Money]) -> Money {
        if self.tie_rule == SellerTieRule::KeepCurrent {
            return crate::equilibrium::stay_if_optimal_best_response(self, player, prices);
        }
        let options = deviation_utilities(self, player, prices);
        let best = options.iter().map(|(_, u)| *u).max().expect("nonempty grid");
        options.into_iter().find(|(_, u)| *u == best).map(|(p, _)| p).expect("a maximizer exists")
    }
}

/// How a seller picks among equally good prices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SellerTieRule {
    #[default]
    LowestPrice,
    KeepCurrent,
}

/// What seller assignment does when a pricing round cycles or hits the
/// sweep cap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclePolicy {
    /// Demote the seller with the lowest utility at the end of the round
    /// (lowest id on ties) and continue.
    #[default]
    DemoteWeakest,
    /// Stop and report the round as not converged.
    Stop,
}

/// Inputs of the seller-assignment procedure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Price grid offered to every seller.
    pub price_grid: Vec<Money>,
    /// Starting price per vehicle (by position). Defaults to the lowest
    /// grid price for everyone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_prices: Option<Vec<Money>>,
    pub max_sweeps: usize,
    #[serde(default)]
    pub tie_rule: SellerTieRule,
    #[serde(default)]
    pub on_cycle: CyclePolicy,
}

impl MarketParams {
    pub fn new(price_grid: Vec<Money>) -> Self {
        MarketParams {
            price_grid,
            initial_prices: None,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            tie_rule: SellerTieRule::default(),
            on_cycle: CyclePolicy::default(),
        }
    }
}

/// Result of the seller-assignment procedure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketAssignment {
    pub state: MarketState,
    /// Sellers turned into buyers, in order.
    pub demotions: Vec<VehicleId>,
    /// The subset of `demotions` made because a pricing round did not
    /// settle.
    pub cycle_breaks: Vec<VehicleId>,
    /// One pricing-game report per round.
    pub reports: Vec<IterationReport<Money>>,
    /// False when a pricing round stopped without reaching a fixed point.
    pub converged: bool,
}

/// Starting sellers: the lowest id at each distinct default time.
pub fn initial_sellers(scenario: &Scenario) -> Vec<VehicleId> {
    let mut seen = BTreeSet::new();
    scenario.vehicles().iter().filter(|v| seen.insert(v.default_departure)).map(|v| v.id).collect()
}

/// Seller assignment: play the pricing game to a fixed point, demote the
/// lowest-id seller without followers, repeat until every seller has a
/// follower.
///
/// Price competition on a grid often cycles (sellers alternately undercut
/// for contested buyers and raise for captive ones). Under
/// [`CyclePolicy::DemoteWeakest`] such a round demotes its lowest-utility
/// seller, which is a follower-less one whenever any exists.
pub fn assign_sellers(scenario: &Scenario, params: &MarketParams) -> Result<MarketAssignment> {
    if params.price_grid.is_empty() {
        return Err(Error::EmptyPriceGrid(VehicleId(1)));
    }
    let floor = *params.price_grid.iter().min().expect("nonempty grid");
    let start_price = |id: VehicleId| -> Result<Money> {
        match &params.initial_prices {
            None => Ok(floor),
            Some(prices) => prices
                .get(id.index())
                .copied()
                .ok_or_else(|| Error::InvalidMarket(format!("no initial price for vehicle {id}"))),
        }
    };
    let sellers = initial_sellers(scenario);
    let prices = sellers.iter().map(|&id| Ok((id, start_price(id)?))).collect::<Result<BTreeMap<_, _>>>()?;
    let grids = sellers.iter().map(|&id| (id, params.price_grid.clone())).collect();
    let mut state = MarketState::new(scenario, prices, grids)?;
    let mut demotions = Vec::new();
    let mut cycle_breaks = Vec::new();
    let mut reports = Vec::new();

    while !state.sellers.is_empty() {
        let game = MarketGame::from_state(scenario, &state)?.with_tie_rule(params.tie_rule);
        let report = best_response_iteration(&game, &game.current_prices(&state), params.max_sweeps)?;
        for (&id, &p) in game.sellers().iter().zip(&report.final_profile) {
            state.prices.insert(id, p);
        }
        let settled = report.converged;
        let counts = game.follower_counts(&report.final_profile);
        let utilities: Vec<Money> = (0..game.players()).map(|k| game.utility(k, &report.final_profile)).collect();
        reports.push(report);
        let demoted = if settled {
            match game.sellers().iter().zip(&counts).find(|(_, &c)| c == 0) {
                Some((&id, _)) => id,
                None => break,
            }
        } else {
            if params.on_cycle == CyclePolicy::Stop {
                return Ok(MarketAssignment { state, demotions, cycle_breaks, reports, converged: false });
            }
            let weakest =
                (0..game.players()).min_by_key(|&k| (utilities[k], game.sellers()[k])).expect("at least one seller");
            let id = game.sellers()[weakest];
            cycle_breaks.push(id);
            id
        };
        state.sellers.remove(&demoted);
        state.prices.remove(&demoted);
        state.price_grid.remove(&demoted);
        state.buyers.insert(demoted);
        demotions.push(demoted);
    }
    Ok(MarketAssignment { state, demotions, cycle_breaks, reports, converged: true })
}

/// Everything the market model decides for a fleet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub assignment: MarketAssignment,
    pub profile: DepartureProfile,
    pub utilities: Vec<Money>,
    pub leaders: LeaderAssignment,
    /// Choice of every buyer.
    pub choices: BTreeMap<VehicleId, BuyerChoice>,
    /// Followers of every seller.
    pub followers: BTreeMap<VehicleId, BTreeSet<VehicleId>>,
}

impl MarketOutcome {
    pub fn follower_count(&self) -> usize {
        self.followers.values().map(BTreeSet::len).sum()
    }
}

/// Departures, utilities and leaders once sellers are assigned and priced.
pub fn market_outcome(scenario: &Scenario, params: &MarketParams) -> Result<MarketOutcome> {
    let assignment = assign_sellers(scenario, params)?;
    outcome_for(scenario, assignment)
}

pub(crate) fn outcome_for(scenario: &Scenario, assignment: MarketAssignment) -> Result<MarketOutcome> {
    let state = &assignment.state;
    let offers = Offers::new(scenario, state.prices.iter().map(|(&k, &v)| (k, v)));
    let mut departures = scenario.default_times();
    let mut utilities = vec![Money::ZERO; scenario.len()];
    let mut choices = BTreeMap::new();
    let mut followers: BTreeMap<VehicleId, BTreeSet<VehicleId>> =
        state.sellers.iter().map(|&s| (s, BTreeSet::new())).collect();
    for &j in &state.buyers {
        let choice = offers.choose(scenario, j);
        if let BuyerChoice::Follow(s) = choice {
            departures[j.index()] = scenario.vehicles()[s.index()].default_departure;
            followers.get_mut(&s).expect("seller").insert(j);
        }
        utilities[j.index()] = buyer_utility(j, choice, state, scenario)?;
        choices.insert(j, choice);
    }
    let mut leaders = LeaderAssignment::default();
    for (&s, fs) in &followers {
        let v = &scenario.vehicles()[s.index()];
        utilities[s.index()] = seller_payoff(v.profit_leader, fs.len(), state.prices[&s]);
        if !fs.is_empty() {
            leaders.leaders.insert(v.default_departure, s);
        }
    }
    Ok(MarketOutcome { assignment, profile: DepartureProfile::new(departures), utilities, leaders, choices, followers })
}

/// A buyer that could do strictly better than its recorded choice.
pub fn irrational_buyer(outcome: &MarketOutcome, scenario: &Scenario) -> Result<Option<VehicleId>> {
    let state = &outcome.assignment.state;
    for (&j, &choice) in &outcome.choices {
        let current = buyer_utility(j, choice, state, scenario)?;
        let v = scenario.vehicle(j)?;
        for &s in &state.sellers {
            let t = scenario.vehicle(s)?.default_departure;
            if t < v.default_departure || t > v.latest_departure() {
                continue;
            }
            if buyer_utility(j, BuyerChoice::Follow(s), state, scenario)? > current {
                return Ok(Some(j));
            }
        }
        if current.is_negative() {
            return Ok(Some(j));
        }
    }
    Ok(None)
}
