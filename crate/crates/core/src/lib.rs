//! Marker-based semantic pose-graph SLAM with a synthetic world simulator
//! and trajectory evaluation.

// Range checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod geometry;
pub mod obslog;
pub mod semantic;
pub mod sim;
pub mod slam;
pub mod trajectory;
