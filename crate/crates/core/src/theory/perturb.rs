//! Monte Carlo model of one sub-classifier change in an averaging ensemble.
//!
//! Each instance is binary with the gold label first. The ensemble's gold-class
//! probability `f(x)` is drawn from `Be(alpha, beta)` and classifier `k`
//! starts at `h_k(x) = f(x)`, which keeps the remaining `N - 1` rows'
//! mean at `f(x)` as well. The change moves `h_k` by `delta` toward the 0.5
//! decision boundary (clamped to `[0, 1]`), the worst case for a bounded edit,
//! giving `f'(x) = ((N - 1) f(x) + h_k'(x)) / N`.

use alloc::vec::Vec;

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::beta::{beta_interval_exact, BetaSpec};
use crate::error::{Error, Result};
use crate::rng;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub n_classifiers: usize,
    pub instances: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Index of the perturbed classifier.
    pub k: usize,
    pub delta: f64,
    pub seed: u64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// `|U(f) - U(f')|`.
    pub observed_change: f64,
    /// `m / |V|`, flips in either direction.
    pub flip_fraction: f64,
    pub correct_to_incorrect: usize,
    pub incorrect_to_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub config: PerturbationConfig,
    /// `delta / N`.
    pub epsilon: f64,
    /// `2 / (sqrt(2 pi) sigma) * (1 - (0.5 - mu)^2 / (3 sigma^2))`.
    pub lipschitz_constant: f64,
    /// `L * delta / N`.
    pub bound: f64,
    /// Exact `Be(alpha, beta)` mass of `[0.5 - eps, 0.5 + eps]`, when `0 < eps < 0.5`.
    pub interval_mass: Option<f64>,
    pub exceed_count: usize,
    pub mean_observed_change: f64,
    pub max_observed_change: f64,
    pub mean_flip_fraction: f64,
    pub max_flip_fraction: f64,
    /// Largest `| |f' - f| - |h_k' - h_k| / N |` over all simulated instances.
    pub max_identity_error: f64,
    pub trials: Vec<TrialOutcome>,
}

pub fn ensemble_perturbation(cfg: &PerturbationConfig) -> Result<PerturbationReport> {
    let spec = BetaSpec::new(cfg.alpha, cfg.beta)?;
    if cfg.n_classifiers == 0 || cfg.k >= cfg.n_classifiers {
        return Err(Error::Precondition(alloc::format!(
            "classifier index {} must be below N = {} (N >= 1)",
            cfg.k,
            cfg.n_classifiers
        )));
    }
    if !(0.0..=1.0).contains(&cfg.delta) {
        return Err(Error::Precondition(alloc::format!("delta {} must lie in [0, 1]", cfg.delta)));
    }
    if cfg.instances == 0 || cfg.trials == 0 {
        return Err(Error::Precondition("instances and trials must be positive".into()));
    }
    let sampler = Beta::new(cfg.alpha, cfg.beta).map_err(|e| Error::Domain(alloc::format!("{e}")))?;

    let n = cfg.n_classifiers as f64;
    let (mu, sigma) = (spec.mean(), spec.std_dev());
    let lipschitz_constant = 2.0 / (SQRT_2PI * sigma) * (1.0 - (0.5 - mu) * (0.5 - mu) / (3.0 * sigma * sigma));
    let epsilon = cfg.delta / n;
    let bound = lipschitz_constant * epsilon;
    let interval_mass = if epsilon > 0.0 && epsilon < 0.5 { Some(beta_interval_exact(&spec, epsilon)?) } else { None };

    let mut trials = Vec::with_capacity(cfg.trials);
    let mut max_identity_error = 0.0f64;
    for t in 0..cfg.trials {
        let mut r = rng::stream_rng(cfg.seed, t as u64);
        let (mut c2i, mut i2c) = (0usize, 0usize);
        for _ in 0..cfg.instances {
            let p: f64 = sampler.sample(&mut r);
            let h = p;
            let rest = (n - 1.0) * p;
            let before = (rest + h) / n;
            let correct = before >= 0.5;
            let h_new = if correct { (h - cfg.delta).max(0.0) } else { (h + cfg.delta).min(1.0) };
            let after = (rest + h_new) / n;
            max_identity_error = max_identity_error.max(((after - before).abs() - (h_new - h).abs() / n).abs());
            match (correct, after >= 0.5) {
                (true, false) => c2i += 1,
                (false, true) => i2c += 1,
                _ => {}
            }
        }
        let v = cfg.instances as f64;
        trials.push(TrialOutcome {
            observed_change: (c2i as f64 - i2c as f64).abs() / v,
            flip_fraction: (c2i + i2c) as f64 / v,
            correct_to_incorrect: c2i,
            incorrect_to_correct: i2c,
        });
    }

    let count = trials.len() as f64;
    let fold = |f: fn(&TrialOutcome) -> f64| {
        let mean = crate::sum::sum(trials.iter().map(f)) / count;
        let max = trials.iter().map(f).fold(0.0, f64::max);
        (mean, max)
    };
    let (mean_observed_change, max_observed_change) = fold(|o| o.observed_change);
    let (mean_flip_fraction, max_flip_fraction) = fold(|o| o.flip_fraction);
    Ok(PerturbationReport {
        config: *cfg,
        epsilon,
        lipschitz_constant,
        bound,
        interval_mass,
        exceed_count: trials.iter().filter(|o| o.observed_change > bound).count(),
        mean_observed_change,
        max_observed_change,
        mean_flip_fraction,
        max_flip_fraction,
        max_identity_error,
        trials,
    })
}
