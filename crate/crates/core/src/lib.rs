//! Beamformer design for weighted sum-rate maximization in the multicell
//! MISO downlink.
//!
//! The crate has five parts:
//!
//! * [`network`] — the downlink model: topology, Rayleigh channels,
//!   beamformers, SINR/rate/power evaluation.
//! * [`solver`] — a self-contained primal-dual interior-point solver for
//!   second-order cone programs, with the cone modeling helpers the
//!   rate-product reformulation needs.
//! * [`sca`] — the successive convex approximation algorithm: one SOCP per
//!   iteration, monotone objective trace, KKT certification at convergence,
//!   and the exact (non-linearized) variant for supported weight grids.
//! * [`baselines`] — zero-forcing with water-filling and the WMMSE
//!   alternating algorithm.
//! * [`harness`] — seeded Monte Carlo experiments with CSV/JSON outputs.
//!
//! [`verify`] packages the property suites behind the `wsrm verify` command.

pub mod baselines;
pub mod harness;
pub mod network;
pub mod rng;
pub mod sca;
pub mod solver;
pub mod verify;
