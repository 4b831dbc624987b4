//! Two-tier vehicular network model: RSUs and relays on a Poisson line
//! process of roads, with a Monte Carlo simulator and numerical evaluation
//! of the closed-form association, coverage and throughput expressions.

pub mod analytic;
pub mod channel;
pub mod cli;
pub mod config;
pub mod cox;
pub mod error;
pub mod geometry;
pub mod quad;
pub mod sim;
pub mod stream;

pub use config::NetworkConfig;
pub use error::{Error, Result};
pub use stream::Stream;
