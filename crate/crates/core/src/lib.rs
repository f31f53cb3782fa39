//! Min-entropy certification for a single-photon-entanglement quantum
//! random number generator.
//!
//! The photon's momentum (path `|0⟩`, `|1⟩`) and polarisation (`|V⟩`,
//! `|H⟩`) are rotated by an interferometer and a wave plate and detected on
//! four channels. A CHSH violation between the two degrees of freedom bounds
//! how well an adversary can guess each outcome. The crate models the ideal
//! and lossy optics, bounds the gap between them, corrects for detector
//! memory and extracts uniform bits.
//!
//! Basis order everywhere is `(|0V⟩, |0H⟩, |1V⟩, |1H⟩)`, detector channels
//! 1 to 4 in the same order.

pub mod bounds;
pub mod chsh;
pub mod complex;
pub mod config;
pub mod error;
pub mod extract;
pub mod ingest;
pub mod markov;
pub mod optics;
pub mod quantum;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
