//! Infinite-horizon Wasserstein-2 distributionally robust LQR synthesis in
//! the frequency domain, with rational approximation, state-space
//! realization and Monte Carlo validation.

pub mod error;
pub mod grid;
pub mod linalg;
pub mod lti;
pub mod rational;
pub mod simulate;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use grid::GridSamples;
pub use lti::StateSpace;
