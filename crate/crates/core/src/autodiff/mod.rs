//! Reverse-mode differentiation over whole tensors.
//!
//! A [`Tape`] records every op applied to tracked values; `backward` walks
//! the tape in reverse and accumulates gradients into each node. The
//! [`Context`] trait lets the same forward code run eagerly (inference, no
//! graph kept) or on a tape (training and gradient checks).

mod check;
mod context;
mod tape;

pub use check::{finite_diff_check, FdReport};
pub use context::{Context, Eager};
pub use tape::{GradMap, NodeId, Tape};
