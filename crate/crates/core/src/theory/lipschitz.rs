use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, OracleError, Result};
use crate::game::{shapley_exact, Game, Utility};
use crate::learn::EmbeddingMatrix;
use crate::rng;

/// Ratios above `1 + THEOREM1_SLACK` count as violations.
pub const THEOREM1_SLACK: f64 = 1e-9;

/// A scalar field over embeddings with a known Lipschitz constant (Euclidean norm).
pub trait LipschitzField {
    fn value(&self, e: &[f64]) -> f64;
    fn lipschitz(&self) -> f64;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `g(e) = w . e + b`, Lipschitz with constant `|w|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LipschitzField for AffineField {
    fn value(&self, e: &[f64]) -> f64 {
        dot(&self.weights, e) + self.bias
    }
    fn lipschitz(&self) -> f64 {
        norm(&self.weights)
    }
}

/// `g(e) = sin(w . e) + 0.5 tanh(v . e)`, Lipschitz with constant `|w| + 0.5 |v|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothField {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl LipschitzField for SmoothField {
    fn value(&self, e: &[f64]) -> f64 {
        libm::sin(dot(&self.w, e)) + 0.5 * libm::tanh(dot(&self.v, e))
    }
    fn lipschitz(&self) -> f64 {
        norm(&self.w) + 0.5 * norm(&self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Affine,
    Smooth,
}

impl FieldKind {
    /// A field with standard-normal coefficients scaled by `1/sqrt(d)`.
    pub fn random<R: rand_core::RngCore>(self, d: usize, rng: &mut R) -> Box<dyn LipschitzField> {
        let scale = 1.0 / libm::sqrt(d.max(1) as f64);
        let draw = |rng: &mut R| -> Vec<f64> {
            (0..d).map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect()
        };
        match self {
            Self::Affine => {
                let weights = draw(rng);
                Box::new(AffineField { weights, bias: StandardNormal.sample(rng) })
            }
            Self::Smooth => {
                let w = draw(rng);
                Box::new(SmoothField { w, v: draw(rng) })
            }
        }
    }
}

/// Game whose utility is the mean field value over the coalition's embeddings.
#[derive(Debug, Clone)]
pub struct LipschitzGame {
    embeddings: EmbeddingMatrix,
    field_values: Vec<f64>,
    lipschitz: f64,
}

impl LipschitzGame {
    /// Evaluates the field at every embedding and spot-checks the Lipschitz
    /// condition on all pairs.
    pub fn new(embeddings: EmbeddingMatrix, field: &dyn LipschitzField) -> Result<Self> {
        let field_values = embeddings.iter_rows().map(|e| field.value(e)).collect();
        Self::from_values(embeddings, field_values, field.lipschitz())
    }

    pub fn from_values(embeddings: EmbeddingMatrix, field_values: Vec<f64>, lipschitz: f64) -> Result<Self> {
        if field_values.len() != embeddings.rows() {
            return Err(Error::Shape { expected: embeddings.rows(), got: field_values.len() });
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::Invalid(format!("Lipschitz constant {lipschitz} must be >= 0")));
        }
        let game = Self { embeddings, field_values, lipschitz };
        for i in 0..game.players() {
            for j in i + 1..game.players() {
                let dg = (game.field_values[i] - game.field_values[j]).abs();
                let bound = lipschitz * game.distance(i, j);
                if dg > bound * (1.0 + THEOREM1_SLACK) + 1e-15 {
                    return Err(Error::Invalid(format!(
                        "field is not {lipschitz}-Lipschitz on players {i} and {j}: |dg| = {dg}, bound {bound}"
                    )));
                }
            }
        }
        Ok(game)
    }

    /// Replaces the declared constant; it must still dominate the sampled pairs.
    pub fn with_lipschitz(self, lipschitz: f64) -> Result<Self> {
        Self::from_values(self.embeddings, self.field_values, lipschitz)
    }

    pub fn players(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn field_values(&self) -> &[f64] {
        &self.field_values
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.embeddings.row(i), self.embeddings.row(j));
        libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
    }

    pub fn game(&self) -> Game<&Self> {
        Game::new(self, 0.0)
    }
}

impl Utility for LipschitzGame {
    fn players(&self) -> usize {
        self.embeddings.rows()
    }

    fn evaluate(&self, coalition: &Coalition) -> core::result::Result<f64, OracleError> {
        let (mut total, mut count) = (0.0, 0usize);
        for i in coalition.members() {
            total += self.field_values[i];
            count += 1;
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub pairs: usize,
    /// Largest `|SV_i - SV_j| / (L |e_i - e_j|)`; pairs at distance zero count as 0.
    pub max_ratio: f64,
    pub violations: usize,
    pub lipschitz: f64,
}

/// Exact Shapley values of `game` and the bound ratio for every pair of players.
pub fn theorem1_check(game: &LipschitzGame, exact_cap: usize) -> Result<Theorem1Report> {
    let sv = shapley_exact(&game.game(), exact_cap)?.values;
    let n = game.players();
    let (mut max_ratio, mut violations, mut pairs) = (0.0f64, 0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let diff = (sv[i] - sv[j]).abs();
            let bound = game.lipschitz() * game.distance(i, j);
            let ratio = if bound > 0.0 {
                diff / bound
            } else if diff <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            pairs += 1;
            max_ratio = max_ratio.max(ratio);
            violations += usize::from(ratio > 1.0 + THEOREM1_SLACK);
        }
    }
    Ok(Theorem1Report { pairs, max_ratio, violations, lipschitz: game.lipschitz() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Summary {
    pub n: usize,
    pub d: usize,
    pub field: FieldKind,
    pub trials: usize,
    pub seed: u64,
    pub pairs: usize,
    pub max_ratio: f64,
    pub violations: usize,
}

/// Runs [`theorem1_check`] on `trials` random mean-field games. Trial `t` draws
/// standard-normal embeddings and a random field from stream `t` of `seed`.
pub fn theorem1_experiment(
    n: usize,
    d: usize,
    field: FieldKind,
    trials: usize,
    seed: u64,
    exact_cap: usize,
) -> Result<Theorem1Summary> {
    if n > exact_cap {
        return Err(Error::Capacity { n, cap: exact_cap });
    }
    let mut summary = Theorem1Summary { n, d, field, trials, seed, pairs: 0, max_ratio: 0.0, violations: 0 };
    for t in 0..trials {
        let mut r = rng::stream_rng(seed, t as u64);
        let g = field.random(d, &mut r);
        let rows = (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut r)).collect()).collect();
        let ids = (0..n).map(|i| format!("e{i}")).collect();
        let game = LipschitzGame::new(EmbeddingMatrix::new(ids, rows)?, g.as_ref())?;
        let report = theorem1_check(&game, exact_cap)?;
        summary.pairs += report.pairs;
        summary.max_ratio = summary.max_ratio.max(report.max_ratio);
        summary.violations += report.violations;
    }
    Ok(summary)
}
