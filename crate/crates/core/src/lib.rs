//! Departure-time platoon matching among competing vehicles.
//!
//! Vehicles waiting at a shared origin each pick a departure minute; those
//! leaving together form a platoon in which followers save fuel. How the
//! saving is shared decides who is willing to wait for whom. This crate
//! models four sharing rules and the spontaneous baseline, finds pure Nash
//! equilibria by best-response dynamics, checks them against exhaustive
//! oracles, and runs Monte Carlo comparisons of the models.
//!
//! ```
//! use platoon_match::scenario::{scenario_from_defaults, Economics};
//! use platoon_match::solve::{solve, Model, SolveOptions};
//! use platoon_match::money::Money;
//!
//! let fleet = scenario_from_defaults(&[0, 1], 10, &Economics::default())?;
//! let solution = solve(Model::EvenOut, &fleet, &SolveOptions::standard(&fleet))?;
//! assert_eq!(solution.profile.departures, vec![1, 1]);
//! assert_eq!(solution.utilities, vec![Money::ratio(85, 2), Money::ratio(105, 2)]);
//! # Ok::<(), platoon_match::Error>(())
//! ```

pub mod cli;
pub mod distribution;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod market;
pub mod money;
pub mod plot;
pub mod scenario;
pub mod solve;

pub use error::{Error, Result};
pub use money::Money;
pub use scenario::{DepartureProfile, Scenario, Vehicle, VehicleId};
pub use solve::{solve, Model, Solution, SolveOptions};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub struct Scenarios;
    #[doc = include_str!("../../../book/src/distribution.md")]
    pub struct Distribution;
    #[doc = include_str!("../../../book/src/market.md")]
    pub struct Market;
    #[doc = include_str!("../../../book/src/equilibria.md")]
    pub struct Equilibria;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
