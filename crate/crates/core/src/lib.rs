//! Joint transmit-constellation design for the two-user non-coherent MIMO
//! multiple-access channel.
//!
//! The crate designs product constellations by optimizing closed-form
//! detection-error metrics on a product of complex unit spheres, and
//! validates the designs with an exact ML-detector Monte-Carlo simulator and
//! pilot-based baselines.
//!
//! - [`constellation`]: codebook data model, generation, partitioning,
//!   correlated-fading transform, file format.
//! - [`metrics`]: likelihoods, PLLR moments, Cantelli bound, d-metrics,
//!   chordal criterion, partitioning bounds.
//! - [`optimizer`]: smoothed max-min criteria and Riemannian gradient
//!   descent on the oblique manifold.
//! - [`simulator`]: block-fading Monte-Carlo link simulation with exact ML
//!   detection and the pilot baseline.

pub mod constellation;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod simulator;

pub use constellation::{Codebook, JointCodebook, SystemConfig};
pub use error::{Error, Result};
