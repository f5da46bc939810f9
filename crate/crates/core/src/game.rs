//! Cooperative games over prompts and their Shapley values.
//!
//! A [`Game`] pairs a [`Utility`] oracle with the declared value of the empty
//! coalition. Three estimators are provided:
//!
//! - [`shapley_exact`] enumerates all `2^n` coalitions in ascending bitset order;
//! - [`shapley_montecarlo`] averages marginal contributions over seeded random
//!   permutations, optionally truncating a permutation once its prefix is within
//!   a tolerance of the grand-coalition utility;
//! - [`loo_values`] computes leave-one-out differences.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, OracleError, Result};
use crate::rng;
use crate::sum::NeumaierSum;

/// Default upper bound on the player count accepted by [`shapley_exact`].
pub const DEFAULT_EXACT_CAP: usize = 20;

/// Hard limit for exact enumeration (coalitions are indexed by a `u64` mask).
const MAX_EXACT_PLAYERS: usize = 30;

/// A deterministic map from coalitions to real utilities.
///
/// Implementations must return the same value every time they are asked about
/// the same coalition. Oracles that are `Sync` may be evaluated concurrently.
pub trait Utility {
    fn players(&self) -> usize;
    fn evaluate(&self, coalition: &Coalition) -> core::result::Result<f64, OracleError>;
}

impl<T: Utility + ?Sized> Utility for &T {
    fn players(&self) -> usize {
        (**self).players()
    }
    fn evaluate(&self, coalition: &Coalition) -> core::result::Result<f64, OracleError> {
        (**self).evaluate(coalition)
    }
}

impl<T: Utility + ?Sized> Utility for Box<T> {
    fn players(&self) -> usize {
        (**self).players()
    }
    fn evaluate(&self, coalition: &Coalition) -> core::result::Result<f64, OracleError> {
        (**self).evaluate(coalition)
    }
}

/// Utility backed by an infallible closure.
pub struct FnUtility<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&Coalition) -> f64> FnUtility<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&Coalition) -> f64> Utility for FnUtility<F> {
    fn players(&self) -> usize {
        self.n
    }
    fn evaluate(&self, coalition: &Coalition) -> core::result::Result<f64, OracleError> {
        Ok((self.f)(coalition))
    }
}

/// A utility oracle together with the value it assigns to the empty coalition.
pub struct Game<U> {
    utility: U,
    u_empty: f64,
}

impl<U: Utility> Game<U> {
    /// The empty coalition is never passed to `utility`; it is worth `u_empty`.
    pub fn new(utility: U, u_empty: f64) -> Self {
        Self { utility, u_empty }
    }

    /// Uses the oracle's own answer for the empty coalition.
    pub fn with_oracle_empty(utility: U) -> Result<Self> {
        let empty = Coalition::empty(utility.players());
        let u_empty = utility
            .evaluate(&empty)
            .map_err(|source| Error::Oracle { coalition: empty.to_hex(), source })?;
        Ok(Self { utility, u_empty })
    }

    pub fn players(&self) -> usize {
        self.utility.players()
    }

    pub fn u_empty(&self) -> f64 {
        self.u_empty
    }

    pub fn utility(&self) -> &U {
        &self.utility
    }

    pub fn into_utility(self) -> U {
        self.utility
    }

    pub fn value(&self, coalition: &Coalition) -> Result<f64> {
        if coalition.players() != self.players() {
            return Err(Error::Consistency(format!(
                "coalition over {} players evaluated in a {}-player game",
                coalition.players(),
                self.players()
            )));
        }
        if coalition.is_empty() {
            return Ok(self.u_empty);
        }
        self.utility
            .evaluate(coalition)
            .map_err(|source| Error::Oracle { coalition: coalition.to_hex(), source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub method: Method,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Permutations drawn; zero for the exact and leave-one-out methods.
    pub samples: usize,
    pub seed: Option<u64>,
    pub u_full: f64,
    pub u_empty: f64,
}

impl ShapleyResult {
    pub fn players(&self) -> usize {
        self.values.len()
    }
}

fn binomial(n: u64, k: u64) -> BigInt {
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for j in 0..k {
        acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    acc
}

/// Coefficient `1 / (n * C(n-1, s))` of a size-`s` coalition in the Shapley sum.
pub fn shapley_weight(n: usize, s: usize) -> Result<BigRational> {
    if n == 0 || s >= n {
        return Err(Error::Domain(format!("shapley_weight(n = {n}, s = {s}) requires 0 <= s <= n - 1 and n >= 1")));
    }
    let denom = BigInt::from(n) * binomial(n as u64 - 1, s as u64);
    Ok(BigRational::new(BigInt::one(), denom))
}

/// [`shapley_weight`] rounded to the nearest `f64`.
pub fn shapley_weight_f64(n: usize, s: usize) -> Result<f64> {
    let w = shapley_weight(n, s)?;
    w.to_f64().ok_or_else(|| Error::Domain(format!("weight for (n = {n}, s = {s}) not representable")))
}

pub fn marginal_contribution<U: Utility>(game: &Game<U>, coalition: &Coalition, player: usize) -> Result<f64> {
    let n = game.players();
    if player >= n {
        return Err(Error::Domain(format!("player {player} out of range for n = {n}")));
    }
    if coalition.contains(player) {
        return Err(Error::Precondition(format!("player {player} already belongs to coalition {coalition:?}")));
    }
    let with = game.value(&coalition.with(player))?;
    let without = game.value(coalition)?;
    Ok(with - without)
}

fn check_exact_capacity(n: usize, cap: usize) -> Result<()> {
    if n > cap || n > MAX_EXACT_PLAYERS {
        return Err(Error::Capacity { n, cap: cap.min(MAX_EXACT_PLAYERS) });
    }
    if n == 0 {
        return Err(Error::Precondition("game has no players".into()));
    }
    Ok(())
}

/// Exact Shapley values by enumeration of all `2^n` coalitions.
pub fn shapley_exact<U: Utility>(game: &Game<U>, exact_cap: usize) -> Result<ShapleyResult> {
    let n = game.players();
    check_exact_capacity(n, exact_cap)?;
    let size = 1usize << n;
    let mut table = Vec::with_capacity(size);
    for mask in 0..size as u64 {
        table.push(game.value(&Coalition::from_mask(n, mask))?);
    }
    let weights = (0..n).map(|s| shapley_weight_f64(n, s)).collect::<Result<Vec<_>>>()?;

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let bit = 1usize << i;
        let mut acc = NeumaierSum::new();
        for mask in (0..size).filter(|m| m & bit == 0) {
            let s = mask.count_ones() as usize;
            acc.add(weights[s] * (table[mask | bit] - table[mask]));
        }
        values.push(acc.value());
    }
    Ok(ShapleyResult {
        method: Method::Exact,
        values,
        stderr: vec![0.0; n],
        samples: 0,
        seed: None,
        u_full: table[size - 1],
        u_empty: game.u_empty(),
    })
}

/// Exact Shapley values in rational arithmetic. `utility` is consulted for
/// every coalition, including the empty one.
pub fn shapley_exact_rational<F>(n: usize, exact_cap: usize, utility: F) -> Result<Vec<BigRational>>
where
    F: Fn(&Coalition) -> BigRational,
{
    check_exact_capacity(n, exact_cap)?;
    let size = 1usize << n;
    let table: Vec<BigRational> = (0..size as u64).map(|m| utility(&Coalition::from_mask(n, m))).collect();
    let weights = (0..n).map(|s| shapley_weight(n, s)).collect::<Result<Vec<_>>>()?;
    Ok((0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..size).filter(|m| m & bit == 0).fold(BigRational::zero(), |acc, mask| {
                acc + &weights[mask.count_ones() as usize] * (&table[mask | bit] - &table[mask])
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub permutations: usize,
    /// Zero disables truncation.
    pub truncation_tol: f64,
    pub seed: u64,
}

impl MonteCarloConfig {
    pub fn new(permutations: usize, seed: u64) -> Self {
        Self { permutations, truncation_tol: 0.0, seed }
    }
}

/// The `index`-th permutation drawn by [`shapley_montecarlo`] for `seed`.
pub fn sampled_permutation(n: usize, seed: u64, index: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream_rng(seed, index as u64), &mut order);
    order
}

/// Permutation-sampling estimate of the Shapley values.
///
/// Permutation `t` is drawn from ChaCha stream `t` of `seed`, so every
/// permutation can be regenerated independently and results do not depend on
/// evaluation order. Per-player means use compensated sums; standard errors are
/// the sample standard deviation over `sqrt(T)` (zero when `T = 1`).
pub fn shapley_montecarlo<U: Utility>(game: &Game<U>, cfg: &MonteCarloConfig) -> Result<ShapleyResult> {
    let n = game.players();
    if cfg.permutations == 0 {
        return Err(Error::Precondition("at least one permutation is required".into()));
    }
    if !(cfg.truncation_tol >= 0.0) {
        return Err(Error::Precondition(format!("truncation tolerance {} must be >= 0", cfg.truncation_tol)));
    }
    let u_full = game.value(&Coalition::full(n))?;
    let truncate = cfg.truncation_tol > 0.0;

    let mut sums = vec![NeumaierSum::new(); n];
    let mut running_mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut marginals = vec![0.0; n];

    for t in 0..cfg.permutations {
        let order = sampled_permutation(n, cfg.seed, t);
        let mut prefix = Coalition::empty(n);
        let mut previous = game.u_empty();
        let mut truncated = truncate && (previous - u_full).abs() <= cfg.truncation_tol;
        for &player in &order {
            if truncated {
                marginals[player] = 0.0;
                continue;
            }
            prefix.insert(player);
            let u = match game.value(&prefix) {
                Ok(u) => u,
                Err(Error::Oracle { source, .. }) => {
                    return Err(Error::OracleInPermutation { permutation: t, prefix: prefix.to_hex(), source })
                }
                Err(e) => return Err(e),
            };
            marginals[player] = u - previous;
            previous = u;
            truncated = truncate && (u - u_full).abs() <= cfg.truncation_tol;
        }

        let count = (t + 1) as f64;
        for i in 0..n {
            let x = marginals[i];
            sums[i].add(x);
            let delta = x - running_mean[i];
            running_mean[i] += delta / count;
            m2[i] += delta * (x - running_mean[i]);
        }
    }

    let t = cfg.permutations as f64;
    let values = sums.iter().map(|s| s.value() / t).collect();
    let stderr = m2
        .iter()
        .map(|&m| if cfg.permutations > 1 { libm::sqrt(m.max(0.0) / (t - 1.0)) / libm::sqrt(t) } else { 0.0 })
        .collect();
    Ok(ShapleyResult {
        method: Method::MonteCarlo,
        values,
        stderr,
        samples: cfg.permutations,
        seed: Some(cfg.seed),
        u_full,
        u_empty: game.u_empty(),
    })
}

/// Leave-one-out values `U(N) - U(N \ {i})`.
pub fn loo_values<U: Utility>(game: &Game<U>) -> Result<ShapleyResult> {
    let n = game.players();
    if n == 0 {
        return Err(Error::Precondition("game has no players".into()));
    }
    let full = Coalition::full(n);
    let u_full = game.value(&full)?;
    let values = (0..n).map(|i| Ok(u_full - game.value(&full.without(i))?)).collect::<Result<Vec<_>>>()?;
    Ok(ShapleyResult {
        method: Method::LeaveOneOut,
        values,
        stderr: vec![0.0; n],
        samples: 0,
        seed: None,
        u_full,
        u_empty: game.u_empty(),
    })
}
