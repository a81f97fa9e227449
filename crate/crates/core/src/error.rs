use thiserror::Error;

/// Errors produced by netlist handling, simulation and the measurement harness.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{message}, line {line}")]
    Parse { line: usize, message: String },

    #[error("duplicate device name `{0}`")]
    DuplicateDevice(String),

    #[error("invalid device `{name}`: {message}")]
    InvalidDevice { name: String, message: String },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("netlist is not simulatable: {0}")]
    Invalid(String),

    #[error("Newton iteration did not converge at t = {time:.6e} s (worst node `{node}`, residual {residual:.3e} A)")]
    NonConvergence { time: f64, node: String, residual: f64 },

    #[error("time step underflow at t = {time:.6e} s (dt = {dt:.3e} s)")]
    StepUnderflow { time: f64, dt: f64 },

    #[error("trace does not cover [{from:.6e}, {to:.6e}] s")]
    TraceWindow { from: f64, to: f64 },

    #[error("no {level} V crossing of `{signal}` after t = {after:.6e} s")]
    NoCrossing { signal: String, level: f64, after: f64 },

    #[error("statistics of an empty sample set")]
    EmptySamples,

    #[error("relative delta against a zero reference")]
    DivisionByZero,

    #[error("injection `{node}` at {t_start:.3e} s: {source}")]
    Injection {
        node: String,
        t_start: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
