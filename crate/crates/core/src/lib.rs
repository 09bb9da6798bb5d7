//! Fisher information for statistical models with nuisance parameters.
//!
//! The crate computes the Fisher information matrix (FIM) of a data model
//! `pr(A | phi, theta)` after the nuisance vector `phi` has been integrated
//! against its prior, together with the quantities it is compared against:
//!
//! | Quantity | Function |
//! |----------|----------|
//! | conditional FIM `F(phi, theta)` | [`fim::conditional_fim`] |
//! | averaged conditional FIM `<F(phi, theta)>_phi` | [`fim::averaged_conditional_fim`] |
//! | marginalized FIM `F(theta)` | [`fim::marginal_fim`] |
//! | nuisance-prior FIM `F_phi(theta)` | [`fim::nuisance_info_fim`] |
//! | joint Bayesian FIM `F_J` and its blocks | [`bayes::joint_bayes_fim`] |
//! | marginalized Bayesian FIM `F_M` | [`bayes::marginal_bayes_fim`] |
//! | second-order small-uncertainty approximation | [`approx::approx_fim`] |
//!
//! Every Monte Carlo estimate is returned as a [`MatrixEstimate`] carrying
//! per-entry standard errors, so matrix inequalities are judged against the
//! sampling noise rather than an arbitrary epsilon. Estimators are pure
//! functions of their inputs and a 64-bit seed: per-sample random streams are
//! derived from `(seed, stage, index)` and reduced in a fixed order, so
//! results are bit-identical for any rayon thread count.
//!
//! The [`models`] module holds a small zoo (Gaussian location, a
//! signal-dependent prior, a Poisson "door" model and a conjugate Gaussian
//! Bayesian setup) whose FIMs are known in closed form.

pub mod approx;
pub mod bayes;
pub mod contracts;
pub mod diff;
mod error;
pub mod fim;
pub mod marginal;
pub mod matrix;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod types;

pub use contracts::{ConditionalModel, DataDescriptor, ModelDims, NuisancePrior, Support, ThetaPrior};
pub use error::{Error, Result};
pub use types::{BlockEstimate, BlockTag, DataSample, FisherMatrix, MatrixEstimate, PhiVector, ThetaVector};
