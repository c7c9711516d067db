//! Deterministic simulation and solver library for aggregative games played
//! over directed peer-to-peer networks.
//!
//! Players minimize individual costs `f_i(x_i, z)` that couple through the
//! average `z` of everyone's action. The crate provides:
//!
//! * [`game`] — action sets, projections, pseudo-gradients and the
//!   variational-inequality residual used to certify Nash equilibria;
//! * [`cournot`] — a multi-market Cournot competition instance family with
//!   analytic gradients and a centralized equilibrium solver;
//! * [`topology`] — directed graph generators, connectivity checks and the
//!   staleness constants implied by bounded delays and activation gaps;
//! * [`engine`] — a discrete-event executor for the asynchronous push-sum
//!   Nash-seeking iteration, with full trace recording;
//! * [`augmented`] — a synchronous column-stochastic replay of a recorded
//!   trace over a virtual delay-chain network, used as an equivalence oracle;
//! * [`coordinate`] — a centralized single-coordinate projected
//!   pseudo-gradient solver with controlled gradient perturbations;
//! * [`verify`] — the invariant battery run over recorded traces.
//!
//! Everything is seeded and architecture-independent: a `(config, seed)` pair
//! reproduces a run bit for bit. The crate is `no_std` (with `alloc`); all IO
//! lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod augmented;
pub mod check;
pub mod coordinate;
pub mod cournot;
pub mod engine;
pub mod game;
pub(crate) mod math;
pub mod rng;
pub mod stepsize;
pub mod timing;
pub mod topology;
pub mod verify;

pub use game::{ActionSet, ActionVector, AggregativeGame};
pub use topology::Digraph;
