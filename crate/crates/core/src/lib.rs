//! Streaming keyframe memory for hierarchical robot policies.
//!
//! A high-level policy sees only the last few camera frames plus a handful of
//! keyframes it nominated earlier. [`memory`] turns those per-tick
//! nominations into a stable keyframe set; [`orchestrator`] runs the
//! high-level and low-level policies at their own rates against the
//! simulated tasks in [`simenv`]. [`datagen`], [`eval`] and [`weights`] cover
//! training data export, metrics and checkpoint merging.

pub mod datagen;
pub mod eval;
pub mod memory;
pub mod orchestrator;
pub mod policies;
pub mod simenv;
pub mod weights;
