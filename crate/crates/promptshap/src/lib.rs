//! File formats, caches, an OpenAI-compatible client and the command-line
//! front end for prompt Shapley valuation. The engines live in
//! [`promptshap_core`], re-exported here as [`core`].

pub use promptshap_core as core;

pub mod augment;
pub mod cache;
pub mod cli;
pub mod client;
pub mod config;
pub mod error;
pub mod extract;
pub mod formats;
pub mod stub;

pub use error::{Error, Result};
