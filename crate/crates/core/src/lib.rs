//! Minimum-fuel planar ascent of a launcher upper stage.
//!
//! The thrust direction follows a closed-loop optimal pitch law, which turns
//! the optimal control problem into a small shooting problem on the thrust
//! profile parameters. See the crate README for an overview.

pub mod dynamics;
pub mod error;
pub mod orbital;
pub mod performance;
pub mod pmp_verify;
pub mod solver;
pub mod steering;

pub use error::{Error, Result};
