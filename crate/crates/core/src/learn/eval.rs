use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::regress::{predict_sv, train, RegressorSpec};
use super::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng;
use crate::sum;

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::Precondition(format!("correlation needs at least 2 points, got {}", a.len())));
    }
    let n = a.len() as f64;
    let ma = sum::sum(a.iter().copied()) / n;
    let mb = sum::sum(b.iter().copied()) / n;
    let cov = sum::sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)));
    let va = sum::sum(a.iter().map(|x| (x - ma) * (x - ma)));
    let vb = sum::sum(b.iter().map(|y| (y - mb) * (y - mb)));
    if !(va > 0.0) || !(vb > 0.0) {
        return Err(Error::UndefinedCorrelation("an input has zero variance".into()));
    }
    Ok((cov / libm::sqrt(va * vb)).clamp(-1.0, 1.0))
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(1) as f64;
    libm::sqrt(sum::sum(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y))) / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub id: String,
    #[serde(rename = "true")]
    pub truth: f64,
    pub pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub pearson: f64,
    pub rmse: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub residuals: Vec<Residual>,
}

/// Seeded shuffle-split: `round(fraction * n)` rows train the regressor, the rest score it.
pub fn holdout_eval(
    x: &EmbeddingMatrix,
    y: &[f64],
    split_seed: u64,
    fraction: f64,
    spec: &RegressorSpec,
) -> Result<HoldoutReport> {
    if x.rows() != y.len() {
        return Err(Error::Shape { expected: x.rows(), got: y.len() });
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Precondition(format!("train fraction must be in (0, 1), got {fraction}")));
    }
    let n = y.len();
    let n_train = libm::round(fraction * n as f64) as usize;
    let n_test = n - n_train.min(n);
    if n_train < 2 || n_test < 2 {
        return Err(Error::Precondition(format!("split of {n} rows gives {n_train} train / {n_test} test; both need >= 2")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream_rng(split_seed, 0), &mut order);
    let (train_idx, test_idx) = order.split_at(n_train);

    let train_y: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
    let mut model = train(&x.select(train_idx), &train_y, spec)?;
    model.meta.seed = Some(split_seed);
    let test_x = x.select(test_idx);
    let truth: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();
    let pred = predict_sv(&model, &test_x)?;
    Ok(HoldoutReport {
        pearson: pearson(&truth, &pred)?,
        rmse: rmse(&truth, &pred),
        n_train,
        n_test,
        seed: split_seed,
        residuals: test_x
            .ids()
            .iter()
            .zip(truth.iter().zip(&pred))
            .map(|(id, (&t, &p))| Residual { id: id.clone(), truth: t, pred: p })
            .collect(),
    })
}
