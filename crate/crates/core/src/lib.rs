//! Occupational AI applicability from classified conversation transcripts.
//!
//! The pipeline runs in stages:
//!
//! 1. [`taxonomy`] reads the O*NET hierarchy and merges it with BLS SOC
//!    employment and wage data.
//! 2. [`workforce`] turns task ratings into per-occupation IWA weights and
//!    workforce-wide IWA frequency shares.
//! 3. [`corpus`] and [`classify`] label each conversation with the IWAs that
//!    describe the user's goal and the AI's action, plus completion and scope.
//! 4. [`metrics`] aggregates labels into per-IWA activity shares and rates.
//! 5. [`score`] combines weights and IWA statistics into per-occupation
//!    applicability scores and the analyses built on them.
//! 6. [`validate`] measures agreement with human annotations and [`report`]
//!    writes the tables.

pub mod classify;
pub mod config;
pub mod corpus;
pub mod ids;
pub mod metrics;
pub mod report;
pub mod score;
pub mod stats;
pub mod synth;
pub mod table;
pub mod taxonomy;
pub mod validate;
pub mod workforce;

pub use ids::{DwaId, GwaId, IwaId, SocCode, TaskId};
