//! Abstract processor: a cycle-cost microprogram interpreter with a
//! level-triggered interrupt input. BERI and RISC-V differ only in their
//! [`CoreProfile`].

pub mod checksum;
mod core;
pub mod echo;
mod profile;
pub mod program;

pub use self::core::{Activity, Core, ExecContext, OpTraceEntry, Step, LOOP_GUARD, OP_TRACE_DEPTH};
pub use checksum::checksum16;
pub use echo::{driver_attach, icmp_echo_handler, icmp_echo_handler_with};
pub use profile::{CoreKind, CoreProfile};
pub use program::{Count, Microprogram, Op, Sink, Source, Transform};

/// Interrupt line level and service state of a core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterruptState {
    pub line: bool,
    pub in_service: bool,
}
