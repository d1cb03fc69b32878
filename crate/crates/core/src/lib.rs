//! Detector construction for composite hypothesis testing over regular
//! families of distributions.
//!
//! The crate is organised bottom-up:
//!
//! * [`sets`] – convex-set oracles (membership, projection, support function).
//! * [`families`] – regular data `(H, M, Φ)`, the basic families and the
//!   calculus combinators.
//! * [`saddle`] – the convex-concave saddle point solver with a duality-gap
//!   certificate.
//! * [`detector`] – affine detectors, repeated tests, Gaussian closed forms.
//! * [`multitest`] – pairwise batteries, Perron–Frobenius shifts, color
//!   inference.
//! * [`aggregation`] – Voronoi-cell based aggregation of estimates.
//! * [`quadlift`] – quadratic lifting of Gaussian observations.
//! * [`simulate`] – samplers and Monte Carlo validation of certificates.

pub mod aggregation;
pub mod detector;
pub mod error;
pub mod families;
pub mod linalg;
pub mod multitest;
pub mod optim;
pub mod quadlift;
pub mod saddle;
pub mod sets;
pub mod simulate;

pub use error::{Error, Result};
pub use families::RegularData;
pub use sets::ConvexSet;
