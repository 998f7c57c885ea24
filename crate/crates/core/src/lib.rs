//! Analysis and prediction of LRU cache performance for request traces whose
//! content catalog keeps changing.
//!
//! The crate is organised around the data flow of a typical study:
//!
//! * [`trace`] ingests timestamped request logs, merges sessions and cuts
//!   high-load sub-traces.
//! * [`lru`] computes exact LRU hit-ratio curves for every cache size in one
//!   pass using stack distances.
//! * [`shuffle`] applies the three trace randomizations (global, positional,
//!   local) and compares the resulting curves.
//! * [`estimators`] derives per-document lifespan and request-rate estimates.
//! * [`che`] evaluates the Che approximation for the box model and for the
//!   classic independent reference model.
//! * [`synth`] generates synthetic traces and Monte Carlo reference values.

pub mod che;
pub mod error;
pub mod estimators;
pub mod fenwick;
pub mod grid;
pub mod lru;
pub mod seed;
pub mod shuffle;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use seed::Seed;
pub use trace::{DocId, Millis, ObservationWindow, RequestEvent, Trace, TraceSummary, UserId};
