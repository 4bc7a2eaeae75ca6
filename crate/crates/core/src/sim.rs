//! Deterministic discrete-event engine.
//!
//! Time is an integer count of picoseconds. Events are ordered by
//! `(time, component, insertion sequence)`; the component tie-break is part
//! of the public contract so that traces are reproducible bit for bit.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PS_PER_SECOND: u64 = 1_000_000_000_000;
pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_US: u64 = 1_000_000;

/// Picoseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000 * PS_PER_US)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_SECOND as f64
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl std::ops::Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// A named clock with an integer frequency.
///
/// The period is `floor(10^12 / freq_hz)` picoseconds; every conversion in
/// the model goes through that truncated period so that cycle counts
/// round-trip exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockDomain {
    name: String,
    freq_hz: u64,
    period_ps: u64,
}

impl ClockDomain {
    pub fn new(name: impl Into<String>, freq_hz: u64) -> Result<Self> {
        let name = name.into();
        if freq_hz == 0 {
            return Err(Error::InvalidClock { name, freq_hz });
        }
        let period_ps = PS_PER_SECOND / freq_hz;
        if period_ps == 0 {
            return Err(Error::InvalidClock { name, freq_hz });
        }
        Ok(Self {
            name,
            freq_hz,
            period_ps,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn freq_hz(&self) -> u64 {
        self.freq_hz
    }

    pub fn period_ps(&self) -> u64 {
        self.period_ps
    }

    pub fn cycles_to_time(&self, cycles: u64) -> SimTime {
        SimTime(cycles * self.period_ps)
    }

    /// Whole cycles needed to cover `t` (ceiling).
    pub fn time_to_cycles(&self, t: SimTime) -> u64 {
        t.0.div_ceil(self.period_ps)
    }
}

pub fn cycles_to_time(cycles: u64, domain: &ClockDomain) -> SimTime {
    domain.cycles_to_time(cycles)
}

pub fn time_to_cycles(t: SimTime, domain: &ClockDomain) -> u64 {
    domain.time_to_cycles(t)
}

/// Name of the model component an event belongs to. Ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Component(Arc<str>);

impl Component {
    pub fn new(name: &str) -> Self {
        Component(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Component {
    fn from(s: &str) -> Self {
        Component::new(s)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    Oversize,
    Runt,
    RxFull,
    BadDst,
    BadLen,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Oversize => "oversize",
            DropReason::Runt => "runt",
            DropReason::RxFull => "rx-full",
            DropReason::BadDst => "bad-dst",
            DropReason::BadLen => "bad-len",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Ingress,
    WireDone,
    IarGrant,
    PacRx,
    Drop(DropReason),
    Interrupt,
    IsrStart,
    IsrEnd,
    CoreResume,
    ProgramEnd,
    Fault,
    BusRequest,
    BusArbitrate,
    BusGrant,
    BusComplete,
    BusError,
    OarGrant,
    OarRoute,
    Egress,
    HostRequest,
    HostComplete,
    Reflect,
    Debugger,
    Console,
    Spi,
    Boot,
    Timer,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::Ingress => "ingress",
            EventKind::WireDone => "wire-done",
            EventKind::IarGrant => "iar-grant",
            EventKind::PacRx => "pac-rx",
            EventKind::Drop(reason) => return write!(f, "drop:{}", reason.as_str()),
            EventKind::Interrupt => "interrupt",
            EventKind::IsrStart => "isr-start",
            EventKind::IsrEnd => "isr-end",
            EventKind::CoreResume => "core-resume",
            EventKind::ProgramEnd => "program-end",
            EventKind::Fault => "fault",
            EventKind::BusRequest => "bus-request",
            EventKind::BusArbitrate => "bus-arbitrate",
            EventKind::BusGrant => "bus-grant",
            EventKind::BusComplete => "bus-complete",
            EventKind::BusError => "bus-error",
            EventKind::OarGrant => "oar-grant",
            EventKind::OarRoute => "oar-route",
            EventKind::Egress => "egress",
            EventKind::HostRequest => "host-request",
            EventKind::HostComplete => "host-complete",
            EventKind::Reflect => "reflect",
            EventKind::Debugger => "debugger",
            EventKind::Console => "console",
            EventKind::Spi => "spi",
            EventKind::Boot => "boot",
            EventKind::Timer => "timer",
        };
        f.write_str(s)
    }
}

pub type Detail = Vec<(&'static str, String)>;

/// One line of the event trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub time: SimTime,
    pub component: Component,
    pub kind: EventKind,
    pub detail: Detail,
}

impl EventRecord {
    pub fn detail_string(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.detail.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            out.push_str(k);
            out.push('=');
            out.push_str(v);
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.detail
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Time-ordered record of processed events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    records: Vec<EventRecord>,
}

impl EventTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: EventRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EventRecord> {
        self.records.iter()
    }

    /// `time_ps,component,kind,detail`, one row per record, header first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ps,component,kind,detail\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.time.0,
                r.component,
                r.kind,
                r.detail_string()
            ));
        }
        out
    }

    /// SHA-256 of the CSV serialization, hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_csv().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl<'a> IntoIterator for &'a EventTrace {
    type Item = &'a EventRecord;
    type IntoIter = std::slice::Iter<'a, EventRecord>;
    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Payloads describe themselves for the trace.
pub trait Traceable {
    fn kind(&self) -> EventKind;
    fn detail(&self) -> Detail {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

/// An event popped from the queue.
#[derive(Debug)]
pub struct Fired<P> {
    pub id: EventId,
    pub time: SimTime,
    pub component: Component,
    pub payload: P,
}

struct Entry<P> {
    at: SimTime,
    component: Component,
    seq: u64,
    payload: P,
}

impl<P> Entry<P> {
    fn key(&self) -> (SimTime, &Component, u64) {
        (self.at, &self.component, self.seq)
    }
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunLimit {
    Until(SimTime),
    Quiescence,
}

/// Single-threaded event queue with an optional trace.
pub struct Engine<P> {
    now: SimTime,
    queue: BinaryHeap<Reverse<Entry<P>>>,
    next_seq: u64,
    tracing: bool,
    trace: EventTrace,
    processed: u64,
}

impl<P: Traceable> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Traceable> Engine<P> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            next_seq: 0,
            tracing: true,
            trace: EventTrace::new(),
            processed: 0,
        }
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    pub fn tracing(&self) -> bool {
        self.tracing
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> EventTrace {
        std::mem::take(&mut self.trace)
    }

    pub fn next_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(e)| e.at)
    }

    pub fn schedule(&mut self, at: SimTime, component: Component, payload: P) -> Result<EventId> {
        if at < self.now {
            return Err(Error::PastEvent { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Entry {
            at,
            component,
            seq,
            payload,
        }));
        Ok(EventId(seq))
    }

    /// Schedule `delay` after now; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, component: Component, payload: P) -> EventId {
        let at = self.now + delay;
        self.schedule(at, component, payload)
            .expect("relative schedule is never in the past")
    }

    /// Append an annotation record at the current time.
    pub fn note(&mut self, component: &Component, kind: EventKind, detail: Detail) {
        if self.tracing {
            self.trace.push(EventRecord {
                time: self.now,
                component: component.clone(),
                kind,
                detail,
            });
        }
    }

    pub fn tracing_enabled(&self) -> bool {
        self.tracing
    }

    /// Pops the next event if it is due at or before `limit`.
    pub fn pop(&mut self, limit: RunLimit) -> Option<Fired<P>> {
        let due = match (self.queue.peek(), limit) {
            (None, _) => false,
            (Some(Reverse(e)), RunLimit::Until(t)) => e.at <= t,
            (Some(_), RunLimit::Quiescence) => true,
        };
        if !due {
            return None;
        }
        let Reverse(entry) = self.queue.pop()?;
        self.now = entry.at;
        self.processed += 1;
        if self.tracing {
            self.trace.push(EventRecord {
                time: entry.at,
                component: entry.component.clone(),
                kind: entry.payload.kind(),
                detail: entry.payload.detail(),
            });
        }
        Some(Fired {
            id: EventId(entry.seq),
            time: entry.at,
            component: entry.component,
            payload: entry.payload,
        })
    }

    /// Advances the clock to `t` once no earlier events remain.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now && self.next_time().is_none_or(|n| n >= t) {
            self.now = t;
        }
    }

    /// Processes every event due within `limit`, handing each to `handler`,
    /// and returns the records produced during this call.
    pub fn run_until<F>(&mut self, limit: RunLimit, mut handler: F) -> EventTrace
    where
        F: FnMut(&mut Self, Fired<P>),
    {
        let start = self.trace.len();
        while let Some(fired) = self.pop(limit) {
            handler(self, fired);
        }
        if let RunLimit::Until(t) = limit {
            self.advance_to(t);
        }
        EventTrace {
            records: self.trace.records[start..].to_vec(),
        }
    }
}
