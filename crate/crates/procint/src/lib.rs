//! Procurement-integrity analytics toolkit.
//!
//! Ingests raw public-contract registries, classifies contracts by supplier
//! blocklists, derives buyer-supplier relation risk factors, and runs the
//! statistical comparisons between contract classes and government periods.

pub mod classify;
pub mod derive;
pub mod error;
pub mod ingest;
pub mod period_compare;
pub mod pipeline;
pub mod regress;
pub mod report;
pub mod risk_eval;
pub mod stats;
pub mod synth;
pub mod vars;

pub use error::{Error, Result};
