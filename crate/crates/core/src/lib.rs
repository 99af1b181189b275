//! Privacy-aware occupancy sensing for building HVAC control.
//!
//! Occupant movement is modelled as independent Markov chains over zones,
//! each zone runs a receding-horizon controller on reported head counts,
//! and the reported counts pass through a randomized channel chosen to leak
//! as little information as possible about the true counts while keeping
//! the controller's loss within a tolerance.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adversary;
pub mod distortion;
pub mod error;
pub mod harness;
pub mod info;
pub mod io;
pub mod lp;
pub mod occupancy;
pub mod rng;
pub mod thermal;

pub use error::{Error, Result};
