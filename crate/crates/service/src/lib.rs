//! Live questionnaire service: sessions answer adaptively chosen questions,
//! get candidate recommendations, and feed batched model refits.

pub mod api;
pub mod config;
pub mod engine;
pub mod error;
pub mod events;

pub use api::{router, serve, AnswerRequest};
pub use config::ServiceConfig;
pub use engine::{Engine, Health};
pub use error::{ApiError, ServiceError};
