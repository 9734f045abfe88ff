//! Additive smooth-transition (AST) regression and its vector extension
//! (VAST): conjugate backfitting MCMC, predictive simulation, forecast
//! evaluation and generalized impulse responses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conjugate;
pub mod data;
pub mod draws_io;
pub mod error;
pub mod learners;
pub mod linalg;
pub mod model;
pub mod predict;
pub mod sampler;
pub mod structural;

pub use data::{DgpSpec, Standardization, TransformCode};
pub use draws_io::{load_draws, save_draws, DrawFile};
pub use error::{Error, Result};
pub use learners::{eval_base_learner, logistic, logistic_transition, TransitionMatrix};
pub use model::{parameter_count, BaseLearnerParams, ModelConfig, ParameterCount, PosteriorDraw, SeriesClass, TimeSeriesPanel};
pub use predict::{simulate_predictive, MetricTable, PredictiveDraws, Variant};
pub use sampler::{run_chain_ast, run_chain_vast, variable_relevance, ChainOutput, ChainSettings};
pub use structural::{girf, identify_recursive, GirfSpec, VariableOrdering};
