use thiserror::Error;

use crate::scenario::VehicleId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),

    #[error("vehicle {vehicle} cannot depart at {departure}, before its default {default}")]
    EarlyDeparture { vehicle: VehicleId, departure: i64, default: i64 },

    #[error("platoon size must exceed one, got {0}")]
    PlatoonTooSmall(usize),

    #[error("a scenario needs at least one vehicle")]
    EmptyFleet,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid departure profile: {0}")]
    InvalidProfile(String),

    #[error("invalid scores: {0}")]
    InvalidScores(String),

    #[error("vehicle {0} is not a buyer")]
    NotABuyer(VehicleId),

    #[error("vehicle {0} is not a seller")]
    NotASeller(VehicleId),

    #[error("invalid market state: {0}")]
    InvalidMarket(String),

    #[error("price grid of vehicle {0} is empty")]
    EmptyPriceGrid(VehicleId),

    #[error("joint decision space has {size} profiles, above the enumeration cap {cap}")]
    EnumerationCap { size: u128, cap: u128 },

    #[error("unknown model {0:?}, expected one of even_out, score, market, cooperative, spontaneous")]
    UnknownModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
