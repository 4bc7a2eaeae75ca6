use std::path::PathBuf;

use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error)]
pub enum Error {
    #[error("past-event: cannot schedule at {at} when now is {now}")]
    PastEvent { at: SimTime, now: SimTime },

    #[error("clock `{name}` has invalid frequency {freq_hz} Hz")]
    InvalidClock { name: String, freq_hz: u64 },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value `{value}` for config key `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("malformed config line {line}: `{text}`")]
    MalformedConfig { line: usize, text: String },

    #[error("address map: {0}")]
    AddressMap(String),

    #[error("bus-error at address {addr:#010x}")]
    BusError { addr: u64 },

    #[error("memory access {addr:#x}+{len} exceeds capacity {capacity}")]
    OutOfRange { addr: u64, len: u64, capacity: u64 },

    #[error("invalid frame length {0} bytes")]
    InvalidFrame(usize),

    #[error("port {port} out of range (fabric has {ports} ports)")]
    InvalidPort { port: usize, ports: usize },

    #[error("core {0} does not exist")]
    InvalidCore(usize),

    #[error("core {0} is busy")]
    CoreBusy(usize),

    #[error("simulation fault: {0}")]
    Fault(String),

    #[error("debugger: {0}")]
    Debugger(String),

    #[error("boot failed in {state}: {reason}")]
    Boot { state: String, reason: String },

    #[error("empty sample set")]
    EmptySamples,

    #[error("percentile {0} outside [0, 100]")]
    InvalidPercentile(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
