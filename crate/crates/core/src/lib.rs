//! Two-market double auction with learning traders.
//!
//! The crate covers the mean-field game (equilibria and their phase diagram), the
//! single-agent Fokker-Planck picture of experience-weighted attraction learning,
//! large-deviation selection between competing steady states, and a full
//! agent-based simulator.

pub mod action;
pub mod cli;
pub mod error;
pub mod fp;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod market;
pub mod nash;
pub mod ode;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use market::{Aggregates, Class, GameModel, GameParams, Market, MarketCondition, PayoffTable, Side};
