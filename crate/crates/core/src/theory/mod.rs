//! Numerical checks of the valuation theory.
//!
//! - [`lemma1_identity`]: `(1/n)(1/C(n-1,k) + 1/C(n-1,k+1)) = 1/((n-1) C(n-2,k))` in exact rationals;
//! - [`theorem1_check`]: Shapley differences of mean-field games are bounded by
//!   `L * |e_i - e_j|` when the field is `L`-Lipschitz;
//! - [`beta_interval_exact`], [`beta_interval_normal`], [`beta_interval_poly`]:
//!   mass of `Be(a, b)` on `[0.5 - eps, 0.5 + eps]` exactly, under the normal
//!   approximation, and under its third-order Taylor polynomial;
//! - [`ensemble_perturbation`]: flips caused by changing one sub-classifier of
//!   an averaging ensemble, against the polynomial bound.

mod beta;
mod lemma;
mod lipschitz;
mod perturb;
pub mod special;

pub use beta::{
    beta_interval_exact, beta_interval_normal, beta_interval_poly, beta_interval_quadrature, normal_cdf, BetaSpec,
    PolyApprox, POLY_VALIDITY_TOL,
};
pub use lemma::{lemma1_identity, lemma1_sweep, Lemma1Report};
pub use lipschitz::{
    theorem1_check, theorem1_experiment, AffineField, FieldKind, LipschitzField, LipschitzGame, SmoothField,
    Theorem1Report, Theorem1Summary, THEOREM1_SLACK,
};
pub use perturb::{ensemble_perturbation, PerturbationConfig, PerturbationReport, TrialOutcome};
