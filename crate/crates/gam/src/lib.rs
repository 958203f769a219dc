//! Generalized additive models for positive durations: gamma family, log
//! link, penalized thin plate regression spline smooths with GCV-selected
//! smoothing parameters, and chi-square comparison of nested fits.

pub mod basis;
pub mod compare;
pub mod effect;
pub mod error;
pub mod fit;
pub mod frame;
pub mod summary;

pub use basis::{build_smooth, CenteredSmooth, SmoothBasis, SmoothSpec, ThinPlateBasis};
pub use compare::{chi_square_p, compare_models, ModelComparison};
pub use effect::{linspace, partial_effect, EffectPoint};
pub use error::{GamError, Result};
pub use fit::{
    fit_gam, gamma_deviance, gamma_pearson, gcv_formula, gcv_score, FitOptions, FittedTerm,
    GamFit, LambdaSelection, TermBasis, TermSpec,
};
pub use frame::Frame;
pub use summary::{stars, term_summaries, write_curve_csv, write_term_table, TermSummary};
