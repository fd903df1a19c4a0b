//! Stateful logic in SOT-MRAM arrays.
//!
//! Two array flavours are simulated: 2T-1R, where the summed read current of
//! the input cells conditionally switches the output cell, and VGSOT, where a
//! BL voltage divider gates the output's critical SOT current. On top of the
//! nominal gate engine sit margin analysis, operating-point calibration,
//! Monte-Carlo process variation and deterministic CSV/JSON reporting.

pub mod array;
pub mod cli;
pub mod config;
pub mod device;
pub mod gates;
pub mod network;
pub mod report;
pub mod variation;

pub use array::{Array, ArraySpec, CellState};
pub use device::{DeviceParams, MagState, Topology};
pub use gates::{GateKind, GateOp, GateTrace};
pub use network::{Network, NetworkSolution};
