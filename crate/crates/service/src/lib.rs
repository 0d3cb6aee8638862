//! Batch driver and REST service around the invoice pipeline: a file-backed
//! job store with a journaled state machine, a FIFO worker pool, and the
//! human review endpoints.

pub mod api;
pub mod batch;
pub mod preview;
pub mod settings;
pub mod store;
pub mod worker;

pub use api::{router, serve, ApiError, AppState, Service};
pub use batch::{run as run_batch, BatchError, BatchSummary, COMPLETE, NO_DATA};
pub use settings::{ServiceSettings, KEY_ENV};
pub use store::{replay_journal, JobRecord, JobState, Store, StoreError};
