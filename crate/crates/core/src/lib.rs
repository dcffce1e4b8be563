//! Spectral analysis of linearized adversarial training.
//!
//! Local convergence of a two-player generative game is governed by the
//! spectrum of the weighted Laplace operator of the target density: the
//! linearized discriminator/generator pair decouples into independent
//! damped-oscillator modes, one per Laplacian eigenvalue. This crate
//! provides the pieces needed to compute, simulate, and estimate that
//! picture:
//!
//! * [`measure`] — densities on regular grids (closed forms, mixtures,
//!   kernel smoothing of samples) and point-sample containers.
//! * [`laplace`] — finite-volume discretization of the density-weighted
//!   Laplacian, its eigendecomposition, and Rayleigh quotients.
//! * [`lgan`] — the map from loss curvature and spectrum to per-mode
//!   complex eigenvalues, plus closed-form optimal damping parameters.
//! * [`dynamics`] — saddle-point field dynamics: exact mode-expansion
//!   evolution, Euler/Heun time stepping, Helmholtz splitting, and
//!   stationary divergence-free fields.
//! * [`poincare`] — sample-based estimators of the smallest nonzero
//!   eigenvalue (graph Laplacian, parametric Rayleigh minimization,
//!   smoothed-grid reference).
//! * [`datasets`] — image tensors, augmentations, likelihood-based
//!   instance selection, and connectivity scans over dataset variants.
//! * [`io`] — CSV and binary formats for densities, samples, images,
//!   spectra, and traces.
//!
//! All floating-point state is `f64` except image tensors, which are
//! `f32` to match their on-disk format. Randomized operations take
//! explicit seeds and are bit-reproducible for a fixed seed.

pub mod datasets;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod io;
pub mod laplace;
pub mod lgan;
pub mod measure;
pub mod poincare;
pub mod seeds;

pub use error::{Error, Result};
