//! Workloads shared by the benchmarks.

use netsoc_core::sim::{Detail, Engine, EventKind, SimTime, Traceable};
use netsoc_core::PingConfig;

/// Bare timer payload for measuring the event queue alone.
#[derive(Debug, Clone, Copy)]
pub struct Tick(pub u64);

impl Traceable for Tick {
    fn kind(&self) -> EventKind {
        EventKind::Timer
    }
    fn detail(&self) -> Detail {
        vec![("n", self.0.to_string())]
    }
}

/// Engine holding `n` events spread over eight components, with times drawn
/// from a fixed multiplicative sequence so the heap sees an unsorted input.
pub fn loaded_engine(n: u64, tracing: bool) -> Engine<Tick> {
    const NAMES: [&str; 8] = ["mac0", "mac1", "mac2", "mac3", "pac", "bus", "core0", "ddr"];
    let mut e = Engine::new();
    e.set_tracing(tracing);
    for i in 0..n {
        let at = SimTime(i.wrapping_mul(0x9E37_79B9) % (n * 1000));
        e.schedule(at, NAMES[i as usize % NAMES.len()].into(), Tick(i)).unwrap();
    }
    e
}

/// Pings sized like a standard `ping` payload.
pub fn ping_workload(count: usize) -> PingConfig {
    PingConfig {
        count,
        ..PingConfig::default()
    }
}

/// Deterministic packet body of `len` bytes.
pub fn payload(len: usize) -> Vec<u8> {
    (0..len).map(|i| (i as u32).wrapping_mul(2_654_435_761) as u8).collect()
}
