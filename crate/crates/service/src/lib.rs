//! HTTP service for reviewing difficulty-flagged instances.
//!
//! Curators page through the trivial and erroneous queues, submit edits that
//! are checked live against a target predictor, and accept or reject them.
//! Every edit and decision is appended to the edit log, which is replayed on
//! start-up.

pub mod api;
pub mod config;
pub mod predictor;
pub mod state;

pub use api::{router, AppState};
pub use config::{load_dataset, serve, ServiceConfig};
pub use predictor::{PredictRequest, PredictResponse, Predictor, PredictorError, PredictorHandle, StubPredictor};
pub use state::{CurationState, Dataset};
