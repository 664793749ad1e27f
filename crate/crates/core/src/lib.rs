//! Risk-constrained day-ahead bidding for wind producers under a one-price
//! balancing scheme, with merit-order backtesting of the producer's own price
//! impact.
//!
//! - [`strategy`]: the analytical optimal bid and risk-certificate handling.
//! - [`merit_order`]: balancing bid stacks and imbalance price clearing.
//! - [`settlement`]: per-hour profit across both markets, with or without price impact.
//! - [`backtest`]: certificate sweeps, profit distributions and synthetic data.
//! - [`io`]: dataset and report file formats.
//! - [`config`] and [`cli`]: the command-line tool.

pub mod backtest;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod market_model;
pub mod merit_order;
pub mod settlement;
pub mod strategy;

pub use error::{Error, Result};
