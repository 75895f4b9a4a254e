//! Constructive KAM reduction of quasi-periodic linear cocycles
//! `X' = (A + F(θ + tω)) X`.

pub mod diophantine;
pub mod driver;
pub mod cocycle;
pub mod error;
pub mod kam_step;
pub mod schrodinger;
pub mod linalg;
pub mod smoothing;
pub mod torus_fourier;

pub use error::{KamError, Result};
