//! Learning short, unordered threshold rules that flag clients at risk of
//! chronic emergency-shelter use, and replaying them over monthly housing
//! meetings to measure precision, recall and time to identification.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`event_model`]: event CSV, client timelines, stays, episodes, the
//!   chronic label and the active-client test.
//! - [`synthgen`]: seeded synthetic cohorts and per-class access statistics.
//! - [`tabulate`]: per-window attribute summary tables on the meeting schedule.
//! - [`features`]: discriminating threshold features, coverage tables and the
//!   attribute retention order.
//! - [`opus`]: exhaustive branch-and-bound search for the best conjunction.
//! - [`ruleset`]: the covering loop and rule-set JSON.
//! - [`eval`]: stratified cross-validation and the triage replay.

pub mod bits;
pub mod eval;
pub mod event_model;
pub mod features;
pub mod opus;
pub mod ruleset;
pub mod stats;
pub mod synthgen;
pub mod tabulate;

pub use bits::Bits;
pub use event_model::{ClientId, ClientTimeline, EventRecord};
pub use features::{CoverageTable, Feature, Operator};
pub use opus::{MetricCounts, Rule, SearchConfig};
pub use ruleset::RuleSet;
pub use tabulate::{Attribute, AttributeSchema, WindowSize};
