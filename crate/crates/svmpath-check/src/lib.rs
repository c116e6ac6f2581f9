//! Independent verification tools for the path tracer.
//!
//! Everything in this crate re-derives results through deliberately
//! different algorithms than the main library: dense unreduced solves
//! instead of reduced eliminations, one-index-at-a-time pivoting instead
//! of boundary-set resolution, and from-scratch KKT audits instead of the
//! tracer's incremental bookkeeping. Agreement between the two crates is
//! the evidence the acceptance suite is built on.

pub mod audit;
pub mod conventional;
pub mod instances;
pub mod unreduced;
