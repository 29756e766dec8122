//! Human-in-the-loop curation of hate-speech / counter-narrative pairs:
//! pair storage, diversity and effort metrics, candidate generation,
//! reviewer filtering and expert routing.

pub mod author;
pub mod corpus;
pub mod error;
mod http;
pub mod metrics;
pub mod orchestrator;
pub mod review;
pub mod text;

pub use error::{Error, Result};
