//! Structural model of a bidding labor market in which applicants send a noisy,
//! costly signal of ability alongside their bid.
//!
//! The crate covers the full chain: measuring signals and effort from raw
//! application logs, simulating markets, estimating employer demand and the
//! applicant type distribution, and solving counterfactual equilibria.

pub mod beliefs;
pub mod bid_signal;
pub mod counterfactual;
pub mod demand;
pub mod error;
pub mod estimation;
pub mod measurement;
pub mod model;
pub mod optimize;
pub mod records;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod supply;
pub mod win_probability;

pub use error::{Error, Result};
pub use model::{
    ArrivalGroup, CountryGroup, GroupMap, ModelParams, ObservableGroup, ReputationGroup,
    SignalProduction,
};
