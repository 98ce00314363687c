//! Federated transfer reinforcement learning, algorithmic core.
//!
//! DDPG agents learn steering-based collision avoidance on 2D LIDAR courses
//! of different physical scale. Observations and actions are mapped to a
//! standard scale ([`transfer`]) so that every agent's networks are
//! interchangeable, and a federation server periodically replaces them with
//! their elementwise mean ([`federation`]).
//!
//! The crate is `no_std` (it needs `alloc`). File formats, networking and
//! the command line live in the `ftrl` crate.

#![no_std]
// Negated float comparisons are how the validators reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ddpg;
pub mod env;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod runner;
pub mod transfer;
pub mod wire;

pub use error::{Error, Result};
