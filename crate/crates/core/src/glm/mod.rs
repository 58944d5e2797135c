//! Numerical core: feature standardization, Poisson regression and ordinary
//! least squares.

mod design;
pub(crate) mod linalg;
mod ols;
mod poisson;

pub use design::{
    standardize, standardize_with_passthrough, ColumnScaling, DesignMatrix, Standardization,
};
pub use ols::{fit_ols, OlsFit};
pub use poisson::{
    fit_poisson_glm, poisson_deviance, poisson_loglik, poisson_loglik_eta, poisson_score,
    FitConfig, GlmFit,
};
