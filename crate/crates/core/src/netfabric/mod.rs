//! Networking data plane: 10 GbE ports, input arbiter (IAR), output arbiter
//! (OAR) and the packet controller (PAC).
//!
//! The arbiters here are pure state machines; the timing (wire
//! serialization, MAC latency, stream beats) is driven by [`crate::soc`].

pub mod pac;
pub mod packet;

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::interconnect::{round_robin_next, RoundRobin};
use crate::sim::{ClockDomain, DropReason, SimTime};

pub use pac::Pac;
pub use packet::{
    beat_count, from_beats, one_hot, port_from_bitmap, serialization_delay, to_beats, Packet,
    PacketMeta, StreamBeat,
};

pub const MAX_PORTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FabricConfig {
    pub ports: usize,
    pub stream_width: usize,
    pub clock_hz: u64,
    pub rx_depth: usize,
    pub mac_latency: SimTime,
    pub line_rate_bps: u64,
}

impl Default for FabricConfig {
    fn default() -> Self {
        Self {
            ports: 4,
            stream_width: 32,
            clock_hz: 156_250_000,
            rx_depth: 16,
            mac_latency: SimTime::from_ns(500),
            line_rate_bps: 10_000_000_000,
        }
    }
}

impl FabricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_PORTS).contains(&self.ports) {
            return Err(Error::InvalidArgument(format!(
                "fabric.ports={} outside 1..={MAX_PORTS}",
                self.ports
            )));
        }
        if !(1..=64).contains(&self.stream_width) {
            return Err(Error::InvalidArgument(format!(
                "fabric.stream_width_bytes={} outside 1..=64",
                self.stream_width
            )));
        }
        if self.rx_depth == 0 || self.line_rate_bps == 0 {
            return Err(Error::InvalidArgument(
                "fabric rx depth and line rate must be positive".into(),
            ));
        }
        ClockDomain::new("fabric", self.clock_hz)?;
        Ok(())
    }

    pub fn clock(&self) -> ClockDomain {
        ClockDomain::new("fabric", self.clock_hz).expect("validated fabric clock")
    }

    pub fn serialization(&self, len: usize) -> SimTime {
        serialization_delay(len, self.line_rate_bps)
    }

    /// Time to move a frame across the stream interface.
    pub fn stream_transfer(&self, len: usize) -> SimTime {
        self.clock()
            .cycles_to_time(beat_count(len, self.stream_width) as u64)
    }

    /// Fixed latency outside the PAC for an uncontended round trip:
    /// ingress wire + MAC + IAR transfer, then OAR transfer + MAC + egress wire.
    pub fn round_trip_fixed(&self, len_in: usize, len_out: usize) -> SimTime {
        self.serialization(len_in)
            + self.mac_latency
            + self.stream_transfer(len_in)
            + self.stream_transfer(len_out)
            + self.mac_latency
            + self.serialization(len_out)
    }
}

/// IAR rule: next pending port after `last` in cyclic order.
pub fn iar_select(ports: usize, pending: &[usize], last: usize) -> Option<usize> {
    round_robin_next(ports, last, |p| pending.contains(&p))
}

/// OAR routing: the output port named by a one-hot destination bitmap.
pub fn oar_route(meta: &PacketMeta, ports: usize) -> Result<usize, DropReason> {
    match port_from_bitmap(meta.dst_port) {
        Some(p) if p < ports => Ok(p),
        _ => Err(DropReason::BadDst),
    }
}

/// Round-robin multiplexer between per-input packet queues. Used for the
/// IAR (inputs are ports) and the OAR (inputs are packet sources).
#[derive(Debug, Clone)]
pub struct Arbiter {
    queues: Vec<VecDeque<Packet>>,
    rr: RoundRobin,
    grants: Vec<usize>,
    log_grants: bool,
}

impl Arbiter {
    pub fn new(inputs: usize) -> Self {
        Self {
            queues: vec![VecDeque::new(); inputs],
            rr: RoundRobin::new(inputs),
            grants: Vec::new(),
            log_grants: false,
        }
    }

    pub fn with_grant_log(mut self) -> Self {
        self.log_grants = true;
        self
    }

    pub fn inputs(&self) -> usize {
        self.queues.len()
    }

    pub fn enqueue(&mut self, input: usize, p: Packet) {
        self.queues[input].push_back(p);
    }

    pub fn backlog(&self, input: usize) -> usize {
        self.queues[input].len()
    }

    pub fn is_idle(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }

    pub fn pending(&self) -> Vec<usize> {
        (0..self.queues.len())
            .filter(|&i| !self.queues[i].is_empty())
            .collect()
    }

    /// Grants the next input and dequeues its head packet.
    pub fn grant(&mut self) -> Option<(usize, Packet)> {
        let queues = &self.queues;
        let i = self.rr.grant(|i| !queues[i].is_empty())?;
        if self.log_grants {
            self.grants.push(i);
        }
        let p = self.queues[i].pop_front().expect("granted input has a packet");
        Some((i, p))
    }

    pub fn grant_log(&self) -> &[usize] {
        &self.grants
    }
}
