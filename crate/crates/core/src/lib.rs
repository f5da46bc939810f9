//! Shapley valuation of prompts.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only computation:
//!
//! - [`game`]: coalitions, utility oracles, exact / Monte Carlo / leave-one-out values;
//! - [`ensemble`]: validation accuracy of prompt ensembles over a prediction matrix;
//! - [`learn`]: regressors that map prompt embeddings to Shapley values;
//! - [`theory`]: numerical checks of the Lipschitz and Beta-interval bounds;
//! - [`select`]: rank-and-add curves and best-prefix selection.
//!
//! File formats, caches, the HTTP model client and the command-line tool live in
//! the `promptshap` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod coalition;
pub mod ensemble;
pub mod error;
pub mod game;
pub mod learn;
pub mod rng;
pub mod select;
pub mod sum;
pub mod theory;

pub use coalition::Coalition;
pub use error::{Error, OracleError, Result};
pub use game::{
    loo_values, marginal_contribution, shapley_exact, shapley_exact_rational, shapley_montecarlo,
    shapley_weight, shapley_weight_f64, FnUtility, Game, Method, MonteCarloConfig, ShapleyResult,
    Utility, DEFAULT_EXACT_CAP,
};
