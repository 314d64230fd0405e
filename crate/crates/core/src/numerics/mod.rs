//! Dense linear algebra, seeded randomness and feature scaling shared by the
//! model families.

mod linalg;
mod matrix;
mod rng;
mod scaler;

pub use linalg::{cholesky_solve, least_squares, Cholesky};
pub use matrix::Matrix;
pub use rng::{derive_seed, stream_id, RngStream};
pub use scaler::Scaler;

/// `sign(v)·max(|v| − t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
