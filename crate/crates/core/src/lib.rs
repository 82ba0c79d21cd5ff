//! Robust capacity control for heterogeneous data centers.
//!
//! Servers are grouped into blocks; each slot the controller chooses how many
//! servers each block keeps on for the next slot. Costs combine idle energy,
//! on/off switching and a queueing-based QoS term, while arrival rates follow
//! a hidden-mode chain whose transition rows are only known up to an
//! uncertainty set. The solver computes robust optimal values and threshold
//! policies; the simulator compares them against an MPC baseline.

pub mod aggregate;
pub mod check;
pub mod cli;
pub mod error;
pub mod export;
pub mod grid;
pub mod ingest;
pub mod model;
pub mod mpc;
pub mod modes;
pub mod qos;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod uncertainty;

pub use error::{Error, Result};
