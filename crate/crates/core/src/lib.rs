//! Anomaly detection over object-centric event logs.
//!
//! The pipeline turns an OCEL 2.0 log into per-object feature tables
//! ([`features`]), optionally reduces their dimension ([`reduce`]), scores and
//! ranks objects ([`detect`]), and lifts object scores back onto feature values
//! ([`aggregate`]). [`oracle`] provides textual abstractions and value-level
//! oracles; [`synthgen`] generates purchase-to-pay logs with planted anomalies.

pub mod aggregate;
pub mod detect;
pub mod features;
pub mod ocel;
pub mod oracle;
pub mod reduce;
pub mod synthgen;

pub use features::{DataMatrix, FeatureMatrix, NormalizedFeatureMatrix};
pub use ocel::{AttributeValue, OcelLog};
