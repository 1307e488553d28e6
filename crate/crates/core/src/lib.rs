//! Multi-resolution data fusion (MDF) for super-resolution and sparse
//! interpolation.
//!
//! A full field-of-view low-resolution (or sparsely sampled) acquisition is
//! fused with a small library of high-resolution patches of the same material.
//! The reconstruction runs plug-and-play ADMM: the data term enters through an
//! inversion operator ([`forward`]) and the prior through a denoiser
//! ([`denoise`]), here a non-local-means filter whose candidate patches come
//! from the external library ([`patchlib`]).
//!
//! Module map:
//!
//! - [`image`]: the [`Image`] container, sampling masks, measurement sets and
//!   the linear measurement operators (block mean, replication, masking).
//! - [`io`]: PGM and raw-f64 image files, mask and library files.
//! - [`baselines`]: bicubic and Shepard interpolation.
//! - [`patchlib`]: patch extraction and library construction.
//! - [`denoise`]: library NLM, internal NLM with optional Sinkhorn symmetrization.
//! - [`forward`]: inversion operators for both measurement geometries.
//! - [`pnp`]: the ADMM loop, σ_λ estimation and residual tracking.
//! - [`metrics`]: percent RMSE and acquisition statistics.
//! - [`synth`]: deterministic synthetic lattice scenes and experiments.
//! - [`pipeline`]: manifest-driven batch operations behind the `mdf` binary.

pub mod baselines;
pub mod denoise;
pub mod error;
pub mod forward;
pub mod image;
pub mod io;
pub mod metrics;
pub mod patchlib;
pub mod pipeline;
pub mod pnp;
pub mod rng;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
pub use image::{Image, MeasurementSet, ForwardModel, SamplingMask};
