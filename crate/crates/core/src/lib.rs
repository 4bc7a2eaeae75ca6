//! Deterministic transaction-level simulator of a soft-core network SoC.
//!
//! Cores, a shared register bus, a packet fabric with hardware queues, DDR
//! and the host-side control path are modelled as discrete events on a
//! picosecond time axis. Identical inputs always produce an identical trace.

pub mod config;
pub mod cpu;
pub mod error;
pub mod experiments;
pub mod frame;
pub mod host;
pub mod interconnect;
pub mod memory;
pub mod netfabric;
pub mod pcap;
pub mod resources;
pub mod sim;
pub mod soc;

pub use config::Config;
pub use cpu::{CoreKind, CoreProfile};
pub use error::{Error, Result};
pub use experiments::{
    LatencySamples, PingConfig, PingMode, Proto, Sweep, SweepRow, ThroughputConfig, ThroughputReport,
};
pub use host::{BootConfig, BootState, BootTrace};
pub use interconnect::{AddressMap, AddressRange, BusOp, DeviceId};
pub use memory::MemoryTiming;
pub use netfabric::FabricConfig;
pub use resources::ResourceReport;
pub use sim::{ClockDomain, SimTime};
pub use soc::{ReflectorConfig, Soc, SocConfig};
