//! Learning Shapley values from prompt embeddings.
//!
//! Train a regressor on `(embedding, Shapley value)` pairs, then predict values
//! for prompts whose utilities were never evaluated.

mod embedding;
mod eval;
mod regress;

pub use embedding::EmbeddingMatrix;
pub use eval::{holdout_eval, pearson, rmse, HoldoutReport, Residual};
pub use regress::{
    predict_sv, train, train_gp, train_linear, train_ridge, GpConfig, Params, RegressorKind, RegressorSpec,
    Standardizer, TrainedRegressor, TrainingMeta,
};
