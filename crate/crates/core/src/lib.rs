//! Aftershock statistics for a price series following a crash.
//!
//! Pipeline: minute bars ([`ingest`]) → returns and volatility ([`stats`]) →
//! threshold exceedances ([`events`]) → Omori-Utsu decay ([`omori`]),
//! waiting-time exponent ([`waiting`]), event-event correlation with aging
//! and data collapse ([`correlation`]) → Markovianity check and report
//! ([`diagnostics`]). [`synth`] holds seeded generators for the same point
//! processes, used to validate the estimators.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlation;
pub mod diagnostics;
pub mod error;
pub mod events;
pub mod ingest;
pub mod omori;
pub mod optimize;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod waiting;

pub use error::{Error, Result};
