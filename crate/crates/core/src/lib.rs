//! Transistor-level simulation of radiation-hardened latches: netlists,
//! square-law devices, an MNA transient engine, cell generators, single-node
//! upset injection and the measurement harness built on top of them.

// `!(x > 0.0)` is used on purpose so NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cells;
pub mod devices;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod fault;
pub mod metrics;
pub mod netlist;
pub mod units;

pub use devices::{EnvCondition, MosfetParams};
pub use engine::{dc_operating_point, transient, OperatingPoint, SimConfig, StepKind, Trace};
pub use error::{Error, Result};
pub use netlist::{parse_netlist, serialize, validate, Device, Netlist, Polarity, Waveform};
