//! Shared knowledge hub for triage clients.
//!
//! Comments, solutions with votes, fix-time records and per-project triage
//! state live in a [`store::Store`] persisted as an event journal with
//! periodic snapshots. [`api::router`] exposes it over HTTP under `/api/v1`;
//! the CLI uses the same store directly when working offline.

pub mod api;
pub mod journal;
pub mod service;
pub mod store;

pub use api::{router, RunUpload, SharedStore, ViewQuery};
pub use service::{ServeError, Server, ServerConfig};
pub use store::{Event, ProjectReport, Store, StoreError, StoreOptions, StoreState, TriageChange, TriageUpdate};
