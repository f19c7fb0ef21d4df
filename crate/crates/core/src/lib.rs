//! Regression-tree convergence laboratory: greedy CART fitting, population
//! impurity decreases, sufficient-impurity-decrease and reverse-Poincaré
//! checks, error bounds and replicated rate experiments.

// `!(a < b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cart;
pub mod error;
pub mod experiments;
pub mod lrp;
pub mod model;
pub mod population;
pub mod quadrature;
pub mod rng;
pub mod sid;

pub use cart::{
    best_empirical_split, empirical_impurity_decrease, fit_cart, l2_error, predict, L2Error, L2Mode, Rectangle,
    RegressionTree, SplitStatistics,
};
pub use error::{Error, Result};
pub use model::{
    evaluate_signal, generate_dataset, CoordinateDensity, Dataset, NoiseSpec, ProductDistribution, SignalFunction,
    SignalKind, UnivariateComponent,
};
pub use population::{best_population_split, cell_moments, population_impurity_decrease, CellMoments};
