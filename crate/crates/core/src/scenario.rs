//! Vehicles at a shared origin, their departure-time decision spaces,
//! platoon grouping and time penalties.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::{frac, fraction_serde, fraction_vec_serde, Fraction, Money};

/// 1-based vehicle index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl VehicleId {
    /// Position of the vehicle in [`Scenario::vehicles`].
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        VehicleId(index as u32 + 1)
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl fmt::Debug for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vehicle {
    pub id: VehicleId,
    /// Preferred departure, in minutes.
    pub default_departure: i64,
    /// Longest acceptable delay after the default, in minutes.
    pub max_delay: i64,
    /// Profit for driving the route as a platoon leader.
    pub profit_leader: Money,
    /// Profit for driving the route as a platoon follower.
    pub profit_follower: Money,
    /// Penalty per minute of delay.
    pub penalty_rate: Money,
    /// Monetary value of one score unit.
    pub score_valuation: Money,
}

impl Vehicle {
    /// Latest departure the vehicle accepts.
    pub fn latest_departure(&self) -> i64 {
        self.default_departure + self.max_delay
    }

    /// Follower profit minus leader profit.
    pub fn leading_cost(&self) -> Money {
        self.profit_follower - self.profit_leader
    }
}

/// A fleet at a common origin plus the agreed standard profits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDoc")]
pub struct Scenario {
    vehicles: Vec<Vehicle>,
    standard_profit_leader: Money,
    standard_profit_follower: Money,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    vehicles: Vec<Vehicle>,
    standard_profit_leader: Money,
    standard_profit_follower: Money,
}

impl TryFrom<ScenarioDoc> for Scenario {
    type Error = Error;

    fn try_from(doc: ScenarioDoc) -> Result<Self> {
        Scenario::new(doc.vehicles, doc.standard_profit_leader, doc.standard_profit_follower)
    }
}

impl Scenario {
    pub fn new(vehicles: Vec<Vehicle>, standard_profit_leader: Money, standard_profit_follower: Money) -> Result<Self> {
        if vehicles.is_empty() {
            return Err(Error::EmptyFleet);
        }
        for (index, v) in vehicles.iter().enumerate() {
            if v.id != VehicleId::from_index(index) {
                return Err(Error::InvalidScenario(format!(
                    "vehicle ids must be 1..N in order, found {} at position {}",
                    v.id,
                    index + 1
                )));
            }
            if v.max_delay < 0 {
                return Err(Error::InvalidScenario(format!("vehicle {} has negative max_delay", v.id)));
            }
            if v.penalty_rate.is_negative() {
                return Err(Error::InvalidScenario(format!("vehicle {} has negative penalty_rate", v.id)));
            }
            if v.profit_follower < v.profit_leader {
                log::warn!(
                    "vehicle {} earns more as leader ({}) than as follower ({})",
                    v.id,
                    v.profit_leader,
                    v.profit_follower
                );
            }
        }
        Ok(Scenario { vehicles, standard_profit_leader, standard_profit_follower })
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = VehicleId> + '_ {
        self.vehicles.iter().map(|v| v.id)
    }

    pub fn vehicle(&self, id: VehicleId) -> Result<&Vehicle> {
        if id.0 == 0 {
            return Err(Error::UnknownVehicle(id));
        }
        self.vehicles.get(id.index()).ok_or(Error::UnknownVehicle(id))
    }

    pub fn standard_profit_leader(&self) -> Money {
        self.standard_profit_leader
    }

    pub fn standard_profit_follower(&self) -> Money {
        self.standard_profit_follower
    }

    /// Same fleet under different standard profits.
    pub fn with_standard_profits(&self, leader: Money, follower: Money) -> Scenario {
        Scenario { vehicles: self.vehicles.clone(), standard_profit_leader: leader, standard_profit_follower: follower }
    }

    /// Default departures, one per vehicle in id order (duplicates kept).
    pub fn default_times(&self) -> Vec<i64> {
        self.vehicles.iter().map(|v| v.default_departure).collect()
    }

    /// The profile where everyone leaves at its default.
    pub fn default_profile(&self) -> DepartureProfile {
        DepartureProfile::new(self.default_times())
    }

    /// Decision space of vehicle `id`; see [`feasible_departures`].
    pub fn feasible_departures(&self, id: VehicleId) -> Result<Vec<i64>> {
        let vehicle = self.vehicle(id)?;
        Ok(self.window_defaults(vehicle.default_departure, vehicle.latest_departure()))
    }

    /// Distinct default times within `[from, to]`, ascending.
    pub(crate) fn window_defaults(&self, from: i64, to: i64) -> Vec<i64> {
        let set: BTreeSet<i64> =
            self.vehicles.iter().map(|v| v.default_departure).filter(|t| (from..=to).contains(t)).collect();
        set.into_iter().collect()
    }

    /// Number of joint departure profiles, saturating.
    pub fn profile_count(&self) -> u128 {
        self.ids()
            .map(|id| self.feasible_departures(id).map(|d| d.len() as u128).unwrap_or(1))
            .fold(1u128, |acc, n| acc.saturating_mul(n))
    }
}

/// One chosen departure per vehicle, indexed by vehicle position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DepartureProfile {
    pub departures: Vec<i64>,
}

impl DepartureProfile {
    pub fn new(departures: Vec<i64>) -> Self {
        DepartureProfile { departures }
    }

    pub fn departure(&self, id: VehicleId) -> i64 {
        self.departures[id.index()]
    }

    pub fn len(&self) -> usize {
        self.departures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.departures.is_empty()
    }

    /// Checks that every vehicle departs inside its decision space.
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.departures.len() != scenario.len() {
            return Err(Error::InvalidProfile(format!(
                "{} departures for {} vehicles",
                self.departures.len(),
                scenario.len()
            )));
        }
        for id in scenario.ids() {
            let d = self.departure(id);
            if !scenario.feasible_departures(id)?.contains(&d) {
                return Err(Error::InvalidProfile(format!("vehicle {id} cannot depart at {d}")));
            }
        }
        Ok(())
    }

    /// Vehicles grouped by departure time.
    pub fn platoons(&self) -> BTreeMap<i64, Vec<VehicleId>> {
        platoons_of(&self.departures)
    }
}

pub(crate) fn platoons_of(departures: &[i64]) -> BTreeMap<i64, Vec<VehicleId>> {
    let mut groups: BTreeMap<i64, Vec<VehicleId>> = BTreeMap::new();
    for (index, &d) in departures.iter().enumerate() {
        groups.entry(d).or_default().push(VehicleId::from_index(index));
    }
    groups
}

/// Departure times `vehicle` may choose: the fleet's default times within
/// `[default, default + max_delay]`, ascending and deduplicated.
pub fn feasible_departures(vehicle: &Vehicle, scenario: &Scenario) -> Result<Vec<i64>> {
    match scenario.vehicle(vehicle.id) {
        Ok(v) if v == vehicle => scenario.feasible_departures(vehicle.id),
        _ => Err(Error::UnknownVehicle(vehicle.id)),
    }
}

/// Vehicles departing at vehicle `id`'s default time. Empty when nobody
/// uses that slot.
pub fn platoon_members(profile: &DepartureProfile, id: VehicleId, scenario: &Scenario) -> Result<BTreeSet<VehicleId>> {
    let slot = scenario.vehicle(id)?.default_departure;
    Ok(profile
        .departures
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == slot)
        .map(|(k, _)| VehicleId::from_index(k))
        .collect())
}

/// Linear time penalty `rate * (departure - default)`.
pub fn time_penalty(vehicle: &Vehicle, departure: i64) -> Result<Money> {
    if departure < vehicle.default_departure {
        return Err(Error::EarlyDeparture { vehicle: vehicle.id, departure, default: vehicle.default_departure });
    }
    Ok(vehicle.penalty_rate * (departure - vehicle.default_departure))
}

/// Fuel-saving economics shared by every generated vehicle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Economics {
    #[serde(with = "fraction_serde")]
    pub distance_km: Fraction,
    #[serde(with = "fraction_serde")]
    pub consumption_l_per_km: Fraction,
    pub fuel_price_sek_per_l: Money,
    /// Fraction of fuel saved when following.
    #[serde(with = "fraction_serde")]
    pub follower_saving: Fraction,
    /// Fraction of fuel saved when leading.
    #[serde(with = "fraction_serde")]
    pub leader_saving: Fraction,
    /// SEK per minute of delay.
    pub penalty_rate: Money,
    /// Score units are valued at `profit_follower / score_valuation_divisor`.
    #[serde(with = "fraction_serde")]
    pub score_valuation_divisor: Fraction,
    /// Market prices as fractions of the standard follower profit.
    #[serde(with = "fraction_vec_serde")]
    pub price_fractions: Vec<Fraction>,
}

impl Default for Economics {
    fn default() -> Self {
        Economics {
            distance_km: frac(200, 1),
            consumption_l_per_km: frac(35, 100),
            fuel_price_sek_per_l: Money::from_int(15),
            follower_saving: frac(1, 10),
            leader_saving: frac(0, 1),
            penalty_rate: Money::from_int(10),
            score_valuation_divisor: frac(4, 1),
            price_fractions: vec![frac(1, 5), frac(2, 5), frac(3, 5), frac(4, 5)],
        }
    }
}

impl Economics {
    fn fuel_cost(&self) -> Money {
        self.fuel_price_sek_per_l * (self.distance_km * self.consumption_l_per_km)
    }

    pub fn profit_follower(&self) -> Money {
        self.fuel_cost() * self.follower_saving
    }

    pub fn profit_leader(&self) -> Money {
        self.fuel_cost() * self.leader_saving
    }

    pub fn score_valuation(&self) -> Money {
        Money::new(self.profit_follower().value() / self.score_valuation_divisor)
    }

    /// Seller price grid derived from the standard follower profit.
    pub fn price_grid(&self) -> Vec<Money> {
        let base = self.profit_follower();
        self.price_fractions.iter().map(|f| base * *f).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.penalty_rate.is_negative() {
            return Err(Error::Config("economics.penalty_rate must be >= 0".into()));
        }
        if *self.score_valuation_divisor.numer() == 0 {
            return Err(Error::Config("economics.score_valuation_divisor must be nonzero".into()));
        }
        Ok(())
    }
}

/// Parameters for drawing random fleets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub vehicles: usize,
    /// First minute of the default-departure window.
    pub window_start: i64,
    /// Last minute of the window, inclusive.
    pub window_end: i64,
    pub max_delay: i64,
    pub economics: Economics,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig { vehicles: 10, window_start: 0, window_end: 30, max_delay: 10, economics: Economics::default() }
    }
}

impl ScenarioConfig {
    pub fn with_vehicles(vehicles: usize) -> Self {
        ScenarioConfig { vehicles, ..ScenarioConfig::default() }
    }
}

/// Draws a fleet with i.i.d. uniform default departures on the configured
/// window. Equal seeds give equal scenarios.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    if config.vehicles == 0 {
        return Err(Error::EmptyFleet);
    }
    if config.window_end < config.window_start {
        return Err(Error::InvalidScenario(format!(
            "departure window [{}, {}] is empty",
            config.window_start, config.window_end
        )));
    }
    if config.max_delay < 0 {
        return Err(Error::InvalidScenario("max_delay must be >= 0".into()));
    }
    config.economics.validate()?;
    let econ = &config.economics;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vehicles = (0..config.vehicles)
        .map(|index| Vehicle {
            id: VehicleId::from_index(index),
            default_departure: rng.gen_range(config.window_start..=config.window_end),
            max_delay: config.max_delay,
            profit_leader: econ.profit_leader(),
            profit_follower: econ.profit_follower(),
            penalty_rate: econ.penalty_rate,
            score_valuation: econ.score_valuation(),
        })
        .collect();
    Scenario::new(vehicles, econ.profit_leader(), econ.profit_follower())
}

/// Builds a scenario from explicit default departures with the given
/// economics and a common max delay. Handy for fixtures.
pub fn scenario_from_defaults(defaults: &[i64], max_delay: i64, econ: &Economics) -> Result<Scenario> {
    let vehicles = defaults
        .iter()
        .enumerate()
        .map(|(index, &d)| Vehicle {
            id: VehicleId::from_index(index),
            default_departure: d,
            max_delay,
            profit_leader: econ.profit_leader(),
            profit_follower: econ.profit_follower(),
            penalty_rate: econ.penalty_rate,
            score_valuation: econ.score_valuation(),
        })
        .collect();
    Scenario::new(vehicles, econ.profit_leader(), econ.profit_follower())
}
