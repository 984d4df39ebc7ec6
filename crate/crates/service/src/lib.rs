//! Online claim matching over HTTP, backed by an append-only event log.

pub mod engine;
pub mod events;
pub mod http;

pub use engine::{
    same_observable_state, ClusterDetail, EngineError, Health, ReviewItem, ReviewState, ReviewVerdict, ReviewView, Service,
    ServiceConfig, State, SubmitOutcome, Submission, Suggestion,
};
pub use http::{router, serve};
