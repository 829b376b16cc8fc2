//! Deterministic discrete-event simulation of federated averaging over
//! stochastic wireless uplinks.
//!
//! A [`topology::Topology`] describes the server, access points and clients.
//! The [`engine`] drives rounds of broadcast, local SGD, stochastic upload and
//! time-window gated aggregation, [`metrics`] accounts energy and traffic,
//! [`analysis`] evaluates the convergence constants and bounds, and [`exec`]
//! spreads the client phases of each round over a worker pool.

pub mod analysis;
pub mod channel;
pub mod engine;
pub mod exec;
pub mod learning;
pub mod metrics;
pub mod rng;
pub mod topology;
