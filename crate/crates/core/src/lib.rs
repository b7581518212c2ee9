//! Predefined-time consensus over switching networks.
//!
//! * [`graph`]: weighted graphs, Laplacians, algebraic connectivity and
//!   switching signals.
//! * [`ptcfun`]: predefined-time consensus functions and their certification.
//! * [`protocol`]: the edge-wise and node-wise protocols and gain rules.
//! * [`sim`]: integration of the closed loop and settling diagnostics.
//! * [`formation`]: displacement-based formation control in the plane.

pub mod formation;
pub mod graph;
pub mod protocol;
pub mod ptcfun;
pub mod rng;
pub mod sim;
