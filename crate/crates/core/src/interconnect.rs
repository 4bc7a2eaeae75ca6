//! Address-mapped control interconnect.
//!
//! Carries single-word register transactions from the cores and the host
//! DMA master. One transaction is in flight at a time; masters are granted
//! in round-robin order. The bus is clocked in the CPU clock domain.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sim::{ClockDomain, SimTime};

pub const KIB: u64 = 1024;
pub const GIB: u64 = 1024 * 1024 * 1024;

/// Value returned by reads that fail to decode.
pub const BUS_ERROR_READ: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceId {
    Pac,
    Console,
    Debugger,
    Spi,
    Ddr,
}

impl DeviceId {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceId::Pac => "pac",
            DeviceId::Console => "console",
            DeviceId::Debugger => "debugger",
            DeviceId::Spi => "spi",
            DeviceId::Ddr => "ddr",
        }
    }

    pub fn parse(s: &str) -> Option<DeviceId> {
        Some(match s {
            "pac" => DeviceId::Pac,
            "console" => DeviceId::Console,
            "debugger" => DeviceId::Debugger,
            "spi" => DeviceId::Spi,
            "ddr" => DeviceId::Ddr,
            _ => return None,
        })
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressRange {
    pub device: DeviceId,
    pub base: u64,
    pub size: u64,
}

impl AddressRange {
    pub fn end(&self) -> u64 {
        self.base + self.size
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMap {
    entries: Vec<AddressRange>,
}

impl AddressMap {
    /// Builds a map, rejecting overlapping ranges, empty ranges and devices
    /// mapped more than once.
    pub fn new(mut entries: Vec<AddressRange>) -> Result<Self> {
        entries.sort_by_key(|e| e.base);
        for e in &entries {
            if e.size == 0 {
                return Err(Error::AddressMap(format!("{} has zero size", e.device)));
            }
        }
        for pair in entries.windows(2) {
            if pair[0].end() > pair[1].base {
                return Err(Error::AddressMap(format!(
                    "{} overlaps {}",
                    pair[0].device, pair[1].device
                )));
            }
        }
        for (i, a) in entries.iter().enumerate() {
            if entries[i + 1..].iter().any(|b| b.device == a.device) {
                return Err(Error::AddressMap(format!("{} mapped twice", a.device)));
            }
        }
        Ok(Self { entries })
    }

    /// PAC, console, debugger and DDR; the SPI controller only exists on the
    /// RISC-V build.
    pub fn default_map(with_spi: bool) -> Self {
        let mut entries = vec![
            AddressRange {
                device: DeviceId::Pac,
                base: 0x0000_0000,
                size: 64 * KIB,
            },
            AddressRange {
                device: DeviceId::Console,
                base: 0x0001_0000,
                size: 4 * KIB,
            },
            AddressRange {
                device: DeviceId::Debugger,
                base: 0x0002_0000,
                size: 4 * KIB,
            },
            AddressRange {
                device: DeviceId::Ddr,
                base: 0x8000_0000,
                size: 4 * GIB,
            },
        ];
        if with_spi {
            entries.push(AddressRange {
                device: DeviceId::Spi,
                base: 0x0003_0000,
                size: 4 * KIB,
            });
        }
        Self::new(entries).expect("default map is well formed")
    }

    pub fn entries(&self) -> &[AddressRange] {
        &self.entries
    }

    pub fn decode(&self, addr: u32) -> Option<(DeviceId, u64)> {
        let addr = addr as u64;
        self.entries
            .iter()
            .find(|e| e.contains(addr))
            .map(|e| (e.device, addr - e.base))
    }

    pub fn range_of(&self, device: DeviceId) -> Option<AddressRange> {
        self.entries.iter().copied().find(|e| e.device == device)
    }

    /// Bus address of `offset` within `device`.
    ///
    /// Panics if the device is not mapped or the address does not fit in 32 bits.
    pub fn addr(&self, device: DeviceId, offset: u64) -> u32 {
        let range = self
            .range_of(device)
            .unwrap_or_else(|| panic!("{device} is not mapped"));
        u32::try_from(range.base + offset).expect("bus addresses are 32-bit")
    }

    pub fn with_override(&self, range: AddressRange) -> Result<Self> {
        let mut entries: Vec<_> = self
            .entries
            .iter()
            .copied()
            .filter(|e| e.device != range.device)
            .collect();
        entries.push(range);
        Self::new(entries)
    }

    pub fn without(&self, device: DeviceId) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| e.device != device)
                .collect(),
        }
    }
}

/// A bus master. Cores come first, the host DMA engine last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Master {
    Core(usize),
    Dma,
}

impl fmt::Display for Master {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Master::Core(i) => write!(f, "core{i}"),
            Master::Dma => f.write_str("dma"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterSet {
    cores: usize,
}

impl MasterSet {
    pub fn new(cores: usize) -> Result<Self> {
        if cores == 0 {
            return Err(Error::InvalidArgument("at least one core is required".into()));
        }
        Ok(Self { cores })
    }

    pub fn len(&self) -> usize {
        self.cores + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cores(&self) -> usize {
        self.cores
    }

    pub fn index(&self, m: Master) -> usize {
        match m {
            Master::Core(i) => {
                assert!(i < self.cores, "core{i} is not a registered master");
                i
            }
            Master::Dma => self.cores,
        }
    }

    pub fn master(&self, index: usize) -> Master {
        if index < self.cores {
            Master::Core(index)
        } else {
            assert_eq!(index, self.cores, "master index out of range");
            Master::Dma
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Master> + '_ {
        (0..self.len()).map(|i| self.master(i))
    }
}

/// First requester strictly after `last` in cyclic order over `0..n`.
pub fn round_robin_next(n: usize, last: usize, mut pending: impl FnMut(usize) -> bool) -> Option<usize> {
    (1..=n).map(|step| (last + step) % n).find(|&i| pending(i))
}

/// Round-robin grant state shared by the bus, IAR and OAR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRobin {
    n: usize,
    last: usize,
}

impl RoundRobin {
    /// Starts as if the final requester was granted last, so index 0 wins first.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "round robin over zero requesters");
        Self { n, last: n - 1 }
    }

    pub fn with_last(n: usize, last: usize) -> Self {
        assert!(last < n);
        Self { n, last }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn peek(&self, pending: impl FnMut(usize) -> bool) -> Option<usize> {
        round_robin_next(self.n, self.last, pending)
    }

    pub fn grant(&mut self, pending: impl FnMut(usize) -> bool) -> Option<usize> {
        let g = self.peek(pending)?;
        self.last = g;
        Some(g)
    }
}

/// The interconnect's arbitration rule.
pub fn arbitrate(masters: &MasterSet, pending: &[Master], last: Master) -> Option<Master> {
    let last = masters.index(last);
    round_robin_next(masters.len(), last, |i| pending.contains(&masters.master(i)))
        .map(|i| masters.master(i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusOp {
    Read,
    Write,
}

impl fmt::Display for BusOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BusOp::Read => "read",
            BusOp::Write => "write",
        })
    }
}

/// A single-word register access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterTransaction {
    pub id: u64,
    pub master: Master,
    pub addr: u32,
    pub op: BusOp,
    /// Write payload, or read result once complete.
    pub data: u32,
    pub issue_time: SimTime,
    pub grant_time: Option<SimTime>,
    pub complete_time: Option<SimTime>,
    pub error: bool,
}

impl RegisterTransaction {
    pub fn read(id: u64, master: Master, addr: u32, issue_time: SimTime) -> Self {
        Self {
            id,
            master,
            addr,
            op: BusOp::Read,
            data: 0,
            issue_time,
            grant_time: None,
            complete_time: None,
            error: false,
        }
    }

    pub fn write(id: u64, master: Master, addr: u32, data: u32, issue_time: SimTime) -> Self {
        Self {
            op: BusOp::Write,
            data,
            ..Self::read(id, master, addr, issue_time)
        }
    }

    pub fn latency(&self) -> Option<SimTime> {
        self.complete_time.map(|c| c - self.issue_time)
    }
}

/// A host DMA copy into DDR, occupying the bus for one beat per word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BulkWrite {
    pub id: u64,
    pub master: Master,
    pub addr: u32,
    pub data: Arc<[u8]>,
    pub issue_time: SimTime,
    pub complete_time: Option<SimTime>,
    pub error: bool,
}

impl BulkWrite {
    pub fn words(&self) -> u64 {
        (self.data.len() as u64).div_ceil(4).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BusRequest {
    Word(RegisterTransaction),
    Bulk(BulkWrite),
}

impl BusRequest {
    pub fn master(&self) -> Master {
        match self {
            BusRequest::Word(t) => t.master,
            BusRequest::Bulk(b) => b.master,
        }
    }

    pub fn id(&self) -> u64 {
        match self {
            BusRequest::Word(t) => t.id,
            BusRequest::Bulk(b) => b.id,
        }
    }

    pub fn addr(&self) -> u32 {
        match self {
            BusRequest::Word(t) => t.addr,
            BusRequest::Bulk(b) => b.addr,
        }
    }
}

/// Where a granted request lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Device { device: DeviceId, offset: u64 },
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight {
    pub request: BusRequest,
    pub target: Target,
    pub grant_time: SimTime,
    pub complete_time: SimTime,
}

/// Arbitration and occupancy state of the control bus.
#[derive(Debug, Clone)]
pub struct Interconnect {
    map: AddressMap,
    masters: MasterSet,
    rr: RoundRobin,
    clock: ClockDomain,
    latency_cycles: u64,
    queues: Vec<VecDeque<BusRequest>>,
    in_flight: Option<InFlight>,
    grants: u64,
}

impl Interconnect {
    pub fn new(map: AddressMap, masters: MasterSet, clock: ClockDomain, latency_cycles: u64) -> Self {
        let n = masters.len();
        Self {
            map,
            rr: RoundRobin::new(n),
            queues: vec![VecDeque::new(); n],
            masters,
            clock,
            latency_cycles,
            in_flight: None,
            grants: 0,
        }
    }

    pub fn map(&self) -> &AddressMap {
        &self.map
    }

    pub fn masters(&self) -> &MasterSet {
        &self.masters
    }

    pub fn clock(&self) -> &ClockDomain {
        &self.clock
    }

    pub fn latency_cycles(&self) -> u64 {
        self.latency_cycles
    }

    pub fn decode_address(&self, addr: u32) -> Option<(DeviceId, u64)> {
        self.map.decode(addr)
    }

    pub fn submit(&mut self, req: BusRequest) {
        let idx = self.masters.index(req.master());
        self.queues[idx].push_back(req);
    }

    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    pub fn has_pending(&self) -> bool {
        self.queues.iter().any(|q| !q.is_empty())
    }

    pub fn pending_masters(&self) -> Vec<Master> {
        (0..self.queues.len())
            .filter(|&i| !self.queues[i].is_empty())
            .map(|i| self.masters.master(i))
            .collect()
    }

    pub fn last_granted(&self) -> Master {
        self.masters.master(self.rr.last())
    }

    pub fn grants(&self) -> u64 {
        self.grants
    }

    pub fn in_flight(&self) -> Option<&InFlight> {
        self.in_flight.as_ref()
    }

    fn resolve(&self, req: &BusRequest) -> Target {
        match req {
            BusRequest::Word(t) => match self.map.decode(t.addr) {
                Some((device, offset)) => Target::Device { device, offset },
                None => Target::Unmapped,
            },
            BusRequest::Bulk(b) => {
                let Some((device, offset)) = self.map.decode(b.addr) else {
                    return Target::Unmapped;
                };
                let range = self.map.range_of(device).expect("decoded device is mapped");
                let fits = b.addr as u64 + b.data.len() as u64 <= range.end();
                if device == DeviceId::Ddr && fits {
                    Target::Device { device, offset }
                } else {
                    Target::Unmapped
                }
            }
        }
    }

    /// Grants the next request if the bus is idle. `device_latency` supplies
    /// the target's access time on top of the bus cycles.
    pub fn try_grant(
        &mut self,
        now: SimTime,
        device_latency: impl FnOnce(&BusRequest, Target) -> SimTime,
    ) -> Option<&InFlight> {
        if self.in_flight.is_some() {
            return None;
        }
        let queues = &self.queues;
        let idx = self.rr.grant(|i| !queues[i].is_empty())?;
        let mut request = self.queues[idx].pop_front().expect("granted queue is non-empty");
        let target = self.resolve(&request);
        let beats = match &request {
            BusRequest::Word(_) => 1,
            BusRequest::Bulk(b) => b.words(),
        };
        let bus_time = self.clock.cycles_to_time(self.latency_cycles * beats);
        let complete_time = now + bus_time + device_latency(&request, target);
        if let BusRequest::Word(t) = &mut request {
            t.grant_time = Some(now);
        }
        self.grants += 1;
        self.in_flight = Some(InFlight {
            request,
            target,
            grant_time: now,
            complete_time,
        });
        self.in_flight.as_ref()
    }

    /// Retires the in-flight request.
    pub fn finish(&mut self) -> Option<InFlight> {
        self.in_flight.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clock() -> ClockDomain {
        ClockDomain::new("cpu", 120_000_000).unwrap()
    }

    #[test]
    fn default_map_decodes() {
        let map = AddressMap::default_map(true);
        assert_eq!(map.decode(0x0000_0010), Some((DeviceId::Pac, 0x10)));
        assert_eq!(map.decode(0x0001_0000), Some((DeviceId::Console, 0)));
        assert_eq!(map.decode(0x0003_0004), Some((DeviceId::Spi, 4)));
        assert_eq!(map.decode(0x8000_0100), Some((DeviceId::Ddr, 0x100)));
        assert_eq!(map.decode(0x7000_0000), None);
        assert_eq!(AddressMap::default_map(false).decode(0x0003_0000), None);
    }

    #[test]
    fn overlapping_map_rejected() {
        let r = AddressMap::new(vec![
            AddressRange {
                device: DeviceId::Pac,
                base: 0,
                size: 0x2000,
            },
            AddressRange {
                device: DeviceId::Console,
                base: 0x1000,
                size: 0x1000,
            },
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn arbitrate_cyclic() {
        let ms = MasterSet::new(2).unwrap();
        assert_eq!(
            arbitrate(&ms, &[Master::Core(0), Master::Dma], Master::Core(0)),
            Some(Master::Dma)
        );
        assert_eq!(arbitrate(&ms, &[Master::Core(1)], Master::Dma), Some(Master::Core(1)));
        assert_eq!(arbitrate(&ms, &[Master::Core(0)], Master::Core(0)), Some(Master::Core(0)));
        assert_eq!(arbitrate(&ms, &[], Master::Core(0)), None);
    }

    #[test]
    fn single_transaction_latency() {
        let mut bus = Interconnect::new(
            AddressMap::default_map(false),
            MasterSet::new(1).unwrap(),
            clock(),
            4,
        );
        bus.submit(BusRequest::Word(RegisterTransaction::read(
            0,
            Master::Core(0),
            0x24,
            SimTime(0),
        )));
        let f = bus.try_grant(SimTime(0), |_, _| SimTime(0)).unwrap();
        assert_eq!(f.complete_time, SimTime(33_332));
        assert!(bus.try_grant(SimTime(0), |_, _| SimTime(0)).is_none());
    }

    #[test]
    fn simultaneous_masters_serialize() {
        let mut bus = Interconnect::new(
            AddressMap::default_map(false),
            MasterSet::new(1).unwrap(),
            clock(),
            4,
        );
        bus.submit(BusRequest::Word(RegisterTransaction::read(0, Master::Dma, 0, SimTime(0))));
        bus.submit(BusRequest::Word(RegisterTransaction::read(1, Master::Core(0), 0, SimTime(0))));
        let first = bus.try_grant(SimTime(0), |_, _| SimTime(0)).unwrap().clone();
        assert_eq!(first.request.master(), Master::Core(0));
        bus.finish();
        let second = bus
            .try_grant(first.complete_time, |_, _| SimTime(0))
            .unwrap()
            .clone();
        assert_eq!(second.request.master(), Master::Dma);
        assert_eq!(second.complete_time - first.complete_time, SimTime(33_332));
    }

    #[test]
    fn unmapped_resolves_to_bus_error_target() {
        let mut bus = Interconnect::new(
            AddressMap::default_map(false),
            MasterSet::new(1).unwrap(),
            clock(),
            4,
        );
        bus.submit(BusRequest::Word(RegisterTransaction::read(
            0,
            Master::Core(0),
            0x7000_0000,
            SimTime(0),
        )));
        let f = bus.try_grant(SimTime(0), |_, _| SimTime(0)).unwrap();
        assert_eq!(f.target, Target::Unmapped);
    }
}
