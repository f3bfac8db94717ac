//! Difficulty-aware evaluation.
//!
//! Scores instances by how poorly an ensemble of weak checkpoints predicts
//! their gold label, then uses the scores to pick small evaluation subsets,
//! weight accuracy, slice reports by difficulty, and flag instances for
//! curation. A seeded simulator produces synthetic worlds with a known
//! latent difficulty for end-to-end checks.

pub mod analytics;
pub mod curation;
pub mod difficulty;
pub mod error;
pub mod io;
pub mod numeric;
pub mod rng;
pub mod selection;
pub mod simulator;
pub mod sweep;
pub mod types;

pub use error::{Error, Result};
