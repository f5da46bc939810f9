//! Linear, ridge and Gaussian-process regressors.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Linear,
    Ridge,
    GaussianProcess,
}

/// Per-dimension affine map to zero mean and unit variance, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &EmbeddingMatrix) -> Self {
        let d = x.dim();
        let n = x.rows() as f64;
        let mut mean = alloc::vec![0.0; d];
        for row in x.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = alloc::vec![0.0; d];
        for row in x.iter_rows() {
            var.iter_mut().zip(row).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { libm::sqrt(v) } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }
}

/// Hyperparameters of the RBF Gaussian process. Unset values are chosen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// Defaults to the median pairwise distance between (standardized) training inputs.
    pub length_scale: Option<f64>,
    /// Defaults to the variance of the training targets.
    pub signal_var: Option<f64>,
    pub noise_var: f64,
    pub jitter_start: f64,
    pub jitter_max: f64,
    pub standardize: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self { length_scale: None, signal_var: None, noise_var: 1e-4, jitter_start: 1e-10, jitter_max: 1e-4, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSpec {
    Linear,
    Ridge { lambda: f64, standardize: bool },
    GaussianProcess(GpConfig),
}

impl RegressorSpec {
    pub fn ridge_default() -> Self {
        Self::Ridge { lambda: 1.0, standardize: true }
    }

    pub fn kind(&self) -> RegressorKind {
        match self {
            Self::Linear => RegressorKind::Linear,
            Self::Ridge { .. } => RegressorKind::Ridge,
            Self::GaussianProcess(_) => RegressorKind::GaussianProcess,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Params {
    Affine {
        weights: Vec<f64>,
        intercept: f64,
        standardizer: Option<Standardizer>,
        /// Ridge penalty; absent for ordinary least squares.
        lambda: Option<f64>,
    },
    Rbf {
        length_scale: f64,
        signal_var: f64,
        noise_var: f64,
        /// Jitter that made the kernel matrix factorizable.
        jitter: f64,
        y_mean: f64,
        standardizer: Option<Standardizer>,
        /// Training inputs after standardization, row-major.
        inputs: Vec<f64>,
        alpha: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n: usize,
    pub d: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRegressor {
    pub kind: RegressorKind,
    pub params: Params,
    pub meta: TrainingMeta,
}

fn check_training(x: &EmbeddingMatrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Shape { expected: x.rows(), got: y.len() });
    }
    if y.len() < 2 {
        return Err(Error::Precondition(format!("need at least 2 training samples, got {}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite training target".into()));
    }
    Ok(())
}

fn design(x: &EmbeddingMatrix, standardizer: Option<&Standardizer>) -> DMatrix<f64> {
    let d = x.dim();
    let mut m = DMatrix::zeros(x.rows(), d);
    for (i, row) in x.iter_rows().enumerate() {
        let row = match standardizer {
            Some(s) => s.apply(row),
            None => row.to_vec(),
        };
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

fn mean(xs: &[f64]) -> f64 {
    crate::sum::sum(xs.iter().copied()) / xs.len() as f64
}

/// Centers columns and target; returns `(centered design, column means, centered target, target mean)`.
fn center(mut a: DMatrix<f64>, y: &[f64]) -> (DMatrix<f64>, Vec<f64>, DVector<f64>, f64) {
    let means: Vec<f64> = (0..a.ncols()).map(|j| a.column(j).mean()).collect();
    for (j, m) in means.iter().enumerate() {
        a.column_mut(j).add_scalar_mut(-m);
    }
    let y_mean = mean(y);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    (a, means, yc, y_mean)
}

/// Minimum-norm least-squares solution via SVD with a relative rank cutoff.
fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let eps = f64::EPSILON * a.nrows().max(a.ncols()) as f64 * sigma_max;
    svd.solve(b, eps).map_err(|e| Error::Invalid(format!("least-squares solve failed: {e}")))
}

fn affine(
    kind: RegressorKind,
    x: &EmbeddingMatrix,
    weights: DVector<f64>,
    col_means: &[f64],
    y_mean: f64,
    standardizer: Option<Standardizer>,
    lambda: Option<f64>,
) -> TrainedRegressor {
    let intercept = y_mean - weights.iter().zip(col_means).map(|(w, m)| w * m).sum::<f64>();
    TrainedRegressor {
        kind,
        params: Params::Affine { weights: weights.iter().copied().collect(), intercept, standardizer, lambda },
        meta: TrainingMeta { n: x.rows(), d: x.dim(), seed: None },
    }
}

/// Ordinary least squares with an intercept; minimum-norm weights when rank deficient.
pub fn train_linear(x: &EmbeddingMatrix, y: &[f64]) -> Result<TrainedRegressor> {
    check_training(x, y)?;
    let (a, col_means, yc, y_mean) = center(design(x, None), y);
    let w = min_norm_lstsq(&a, &yc)?;
    Ok(affine(RegressorKind::Linear, x, w, &col_means, y_mean, None, None))
}

/// Minimizes `|y - Xw - b|^2 + lambda |w|^2` with an unpenalized intercept.
pub fn train_ridge(x: &EmbeddingMatrix, y: &[f64], lambda: f64, standardize: bool) -> Result<TrainedRegressor> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Precondition(format!("ridge penalty must be finite and >= 0, got {lambda}")));
    }
    check_training(x, y)?;
    let standardizer = standardize.then(|| Standardizer::fit(x));
    let (a, col_means, yc, y_mean) = center(design(x, standardizer.as_ref()), y);
    let w = if lambda == 0.0 {
        min_norm_lstsq(&a, &yc)?
    } else {
        let mut gram = a.transpose() * &a;
        for j in 0..gram.ncols() {
            gram[(j, j)] += lambda;
        }
        let rhs = a.transpose() * yc;
        let chol = gram.cholesky().ok_or(Error::Conditioning { jitter: 0.0 })?;
        chol.solve(&rhs)
    };
    Ok(affine(RegressorKind::Ridge, x, w, &col_means, y_mean, standardizer, Some(lambda)))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median_pairwise_distance(rows: &[Vec<f64>]) -> Option<f64> {
    let mut d: Vec<f64> = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(libm::sqrt(sq_dist(&rows[i], &rows[j])));
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let m = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    (m > 0.0).then_some(m)
}

fn rbf(a: &[f64], b: &[f64], length_scale: f64, signal_var: f64) -> f64 {
    signal_var * libm::exp(-sq_dist(a, b) / (2.0 * length_scale * length_scale))
}

/// Gaussian-process regression with an RBF kernel and fixed hyperparameters.
pub fn train_gp(x: &EmbeddingMatrix, y: &[f64], cfg: &GpConfig) -> Result<TrainedRegressor> {
    if !(cfg.noise_var >= 0.0) {
        return Err(Error::Precondition(format!("noise variance must be >= 0, got {}", cfg.noise_var)));
    }
    if let Some(l) = cfg.length_scale {
        if !(l > 0.0) {
            return Err(Error::Precondition(format!("length scale must be > 0, got {l}")));
        }
    }
    if x.rows() != y.len() {
        return Err(Error::Shape { expected: x.rows(), got: y.len() });
    }
    if y.is_empty() {
        return Err(Error::Precondition("need at least 1 training sample".into()));
    }
    let standardizer = cfg.standardize.then(|| Standardizer::fit(x));
    let inputs: Vec<Vec<f64>> = x
        .iter_rows()
        .map(|r| match &standardizer {
            Some(s) => s.apply(r),
            None => r.to_vec(),
        })
        .collect();
    let length_scale = cfg.length_scale.or_else(|| median_pairwise_distance(&inputs)).unwrap_or(1.0);
    let y_mean = mean(y);
    let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / y.len() as f64;
    let signal_var = cfg.signal_var.unwrap_or(if y_var > 0.0 { y_var } else { 1.0 });

    let n = inputs.len();
    let kernel = DMatrix::from_fn(n, n, |i, j| rbf(&inputs[i], &inputs[j], length_scale, signal_var));
    let target = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let mut jitter = cfg.jitter_start.max(0.0);
    let (chol, jitter) = loop {
        let mut k = kernel.clone();
        for i in 0..n {
            k[(i, i)] += cfg.noise_var + jitter;
        }
        if let Some(c) = k.cholesky() {
            break (c, jitter);
        }
        let next = if jitter > 0.0 { jitter * 10.0 } else { 1e-10 };
        if next > cfg.jitter_max {
            return Err(Error::Conditioning { jitter });
        }
        jitter = next;
    };
    let alpha = chol.solve(&target);
    Ok(TrainedRegressor {
        kind: RegressorKind::GaussianProcess,
        params: Params::Rbf {
            length_scale,
            signal_var,
            noise_var: cfg.noise_var,
            jitter,
            y_mean,
            standardizer,
            inputs: inputs.into_iter().flatten().collect(),
            alpha: alpha.iter().copied().collect(),
        },
        meta: TrainingMeta { n, d: x.dim(), seed: None },
    })
}

pub fn train(x: &EmbeddingMatrix, y: &[f64], spec: &RegressorSpec) -> Result<TrainedRegressor> {
    match spec {
        RegressorSpec::Linear => train_linear(x, y),
        RegressorSpec::Ridge { lambda, standardize } => train_ridge(x, y, *lambda, *standardize),
        RegressorSpec::GaussianProcess(cfg) => train_gp(x, y, cfg),
    }
}

/// Predicted Shapley value for every row of `x`.
pub fn predict_sv(model: &TrainedRegressor, x: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if x.rows() > 0 && x.dim() != model.meta.d {
        return Err(Error::Shape { expected: model.meta.d, got: x.dim() });
    }
    let prepare = |row: &[f64], s: &Option<Standardizer>| match s {
        Some(s) => s.apply(row),
        None => row.to_vec(),
    };
    Ok(match &model.params {
        Params::Affine { weights, intercept, standardizer, .. } => x
            .iter_rows()
            .map(|r| intercept + prepare(r, standardizer).iter().zip(weights).map(|(a, w)| a * w).sum::<f64>())
            .collect(),
        Params::Rbf { length_scale, signal_var, y_mean, standardizer, inputs, alpha, .. } => {
            let d = model.meta.d.max(1);
            x.iter_rows()
                .map(|r| {
                    let z = prepare(r, standardizer);
                    let k = inputs.chunks_exact(d).zip(alpha).map(|(t, a)| a * rbf(&z, t, *length_scale, *signal_var));
                    y_mean + crate::sum::sum(k)
                })
                .collect()
        }
    })
}
