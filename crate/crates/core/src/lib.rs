//! Semantic reliability analysis of wind-turbine maintenance logs.
//!
//! The pipeline runs ingest, prep, cohort selection, structured prompting
//! through a provider gateway, validation and reconciliation, and finally
//! presentation artifacts. A rule-based mock provider and a seeded synthetic
//! corpus generator make every stage testable offline.

pub mod cli;
pub mod cohorts;
pub mod corpus;
pub mod gateway;
pub mod insights;
pub mod meta;
pub mod prep;
pub mod promptkit;
pub mod syntheval;
pub mod text;
pub mod workflows;
