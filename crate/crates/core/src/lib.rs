//! Trace-driven study of caching and prefetching for embedding rows:
//! synthetic traces, reuse analysis, classic and optimal replacement,
//! optimal-policy labeling, learned caching and prefetch models, a
//! model-managed buffer, and a latency model.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, with `F32` variants for the single-precision path.

pub mod analysis;
pub mod cache_sim;
pub mod error;
pub mod labeler;
pub mod neural;
pub mod perf;
pub mod runtime;
pub mod scalar;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type ModelParams = neural::ModelParameters<Real>;
pub type ModelParamsF32 = neural::ModelParameters<f32>;
pub type Grads = neural::Gradients<Real>;
pub type Run = neural::TrainRun<Real>;
pub type PerfFit = perf::PerfModel<Real>;
pub type PerfFitF32 = perf::PerfModel<f32>;
