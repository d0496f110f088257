//! Fast Fréchet regression for univariate distributional responses in
//! 2-Wasserstein space, with simplex-constrained variable selection.
//!
//! Distributions are represented by their quantile functions evaluated on a
//! shared probability grid in (0, 1). Fitting reduces to weighted averaging
//! of quantile rows followed by projection onto the cone of non-decreasing
//! vectors inside known support bounds; the projection is a warm-startable
//! dual active-set solver ([`monotone_qp`]). Variable selection minimizes the
//! fit discrepancy over the τ-simplex by second-order geodesic descent on the
//! unit sphere ([`friso`]), with resampling helpers ([`resampling`]), a
//! seeded data simulator ([`datagen`]), and a median-timing harness
//! ([`bench`]).

pub mod bench;
pub mod core;
pub mod datagen;
pub mod error;
pub mod frechet;
pub mod friso;
pub mod io;
mod linalg;
pub mod monotone_qp;
pub mod resampling;

pub use crate::core::{
    make_grid, validate_quantile_matrix, wasserstein2_sq, CovariateMatrix, ProbabilityGrid,
    QuantileMatrix, SimplexWeights, SupportBounds,
};
pub use crate::error::{Error, Result};
