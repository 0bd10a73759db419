//! Learning dense 3D box regressors from noisy pseudo labels, with
//! coordinate-level uncertainty from the disagreement of two detection
//! branches.
//!
//! The crate is organized bottom-up: [`geometry`] (box algebra and IoU),
//! [`scenegen`] (synthetic scenes and label corruption), [`pseudolabel`]
//! (clustering seeds), [`nnet`] (model and gradients), [`uncertainty`]
//! (losses), [`eval`] (metrics), [`viz`] (SVG) and [`pipeline`] (training
//! and self-training).

pub mod error;
pub mod eval;
pub mod geometry;
pub mod nnet;
pub mod pipeline;
pub mod pseudolabel;
pub mod scenegen;
pub mod uncertainty;
pub mod viz;

pub use error::{Error, Result};
pub use geometry::Box7;
pub use scenegen::Scene;
