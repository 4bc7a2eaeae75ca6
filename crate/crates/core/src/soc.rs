//! The integrated platform: ports, IAR, PAC, cores, interconnect, DDR, OAR
//! and the host master, driven by one event engine.
//!
//! Timing is transaction level. A core that issues a register operation
//! spends `c_reg_setup` cycles, then the request joins the bus queue; the
//! bus grants immediately when idle and completes after `L_bus` cycles plus
//! the target's access time. DRAM stalls are rounded up to whole CPU
//! cycles, so every activation lasts an integral number of cycles.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cpu::{
    driver_attach, icmp_echo_handler, Activity, Core, CoreKind, CoreProfile, InterruptState,
    Microprogram, OpTraceEntry, Step,
};
use crate::error::{Error, Result};
use crate::frame::{echo_reply, MAX_FRAME, MIN_FRAME};
use crate::host::{
    Console, DebugAction, DebugUnit, DebuggerCommand, DebuggerReply, SpiController,
};
use crate::interconnect::{
    AddressMap, BulkWrite, BusOp, BusRequest, DeviceId, InFlight, Interconnect, Master,
    MasterSet, RegisterTransaction, Target, BUS_ERROR_READ, GIB,
};
use crate::memory::{MemoryModel, MemoryTiming};
use crate::netfabric::{
    one_hot, oar_route, pac, port_from_bitmap, serialization_delay, Arbiter, FabricConfig, Pac,
    Packet, PacketMeta,
};
use crate::sim::{
    Component, Detail, DropReason, Engine, EventKind, EventTrace, Fired, RunLimit, SimTime,
    Traceable,
};

/// Hard-coded echo responder standing in for PAC + CPU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflectorConfig {
    pub latency: SimTime,
    /// Half-width of the uniform jitter band.
    pub jitter: SimTime,
}

impl Default for ReflectorConfig {
    fn default() -> Self {
        Self {
            latency: SimTime::from_ns(1_270),
            jitter: SimTime::from_ns(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocConfig {
    pub profile: CoreProfile,
    pub cores: usize,
    pub bus_latency_cycles: u64,
    pub map: AddressMap,
    pub memory_capacity: u64,
    pub memory_timing: MemoryTiming,
    pub fabric: FabricConfig,
    /// Host PCIe round trip, split evenly before and after the bus.
    pub pcie_latency: SimTime,
    pub spi_clock_hz: u64,
    pub reflector: Option<ReflectorConfig>,
    pub seed: u64,
}

impl SocConfig {
    pub fn for_core(kind: CoreKind) -> Self {
        Self {
            profile: CoreProfile::new(kind),
            cores: 1,
            bus_latency_cycles: 4,
            map: AddressMap::default_map(kind == CoreKind::Riscv),
            memory_capacity: 4 * GIB,
            memory_timing: MemoryTiming::default(),
            fabric: FabricConfig::default(),
            pcie_latency: SimTime::from_ns(900),
            spi_clock_hz: 25_000_000,
            reflector: None,
            seed: 1,
        }
    }
}

impl Default for SocConfig {
    fn default() -> Self {
        Self::for_core(CoreKind::Beri)
    }
}

#[derive(Debug, Clone)]
enum Ev {
    Ingress { port: usize, id: u64, bytes: Arc<[u8]> },
    MacRx { port: usize, packet: Packet },
    IarDone { packet: Packet },
    Reflect { packet: Packet },
    CoreResume { core: usize },
    BusIssue { req: BusRequest },
    Arbitrate,
    BusComplete,
    HostComplete { id: u64 },
    OarDone { port: usize, source: usize, packet: Packet },
    Egress { port: usize, source: usize, packet: Packet },
    SpiDone,
    Timer,
}

impl Traceable for Ev {
    fn kind(&self) -> EventKind {
        match self {
            Ev::Ingress { .. } => EventKind::Ingress,
            Ev::MacRx { .. } => EventKind::WireDone,
            Ev::IarDone { .. } => EventKind::PacRx,
            Ev::Reflect { .. } => EventKind::Reflect,
            Ev::CoreResume { .. } => EventKind::CoreResume,
            Ev::BusIssue { .. } => EventKind::BusRequest,
            Ev::Arbitrate => EventKind::BusArbitrate,
            Ev::BusComplete => EventKind::BusComplete,
            Ev::HostComplete { .. } => EventKind::HostComplete,
            Ev::OarDone { .. } => EventKind::OarRoute,
            Ev::Egress { .. } => EventKind::Egress,
            Ev::SpiDone => EventKind::Spi,
            Ev::Timer => EventKind::Timer,
        }
    }

    fn detail(&self) -> Detail {
        match self {
            Ev::Ingress { port, id, bytes } => vec![
                ("port", port.to_string()),
                ("id", id.to_string()),
                ("len", bytes.len().to_string()),
            ],
            Ev::MacRx { port, packet } => {
                vec![("port", port.to_string()), ("id", packet.id.to_string())]
            }
            Ev::IarDone { packet } | Ev::Reflect { packet } => vec![("id", packet.id.to_string())],
            Ev::CoreResume { core } => vec![("core", core.to_string())],
            Ev::BusIssue { req } => {
                let mut d = vec![
                    ("master", req.master().to_string()),
                    ("id", req.id().to_string()),
                    ("addr", format!("{:#010x}", req.addr())),
                ];
                match req {
                    BusRequest::Word(t) => d.push(("op", t.op.to_string())),
                    BusRequest::Bulk(b) => d.push(("bulk", b.data.len().to_string())),
                }
                d
            }
            Ev::HostComplete { id } => vec![("id", id.to_string())],
            Ev::OarDone {
                port,
                source,
                packet,
            }
            | Ev::Egress {
                port,
                source,
                packet,
            } => vec![
                ("port", port.to_string()),
                ("source", source.to_string()),
                ("id", packet.id.to_string()),
                ("len", packet.len().to_string()),
            ],
            Ev::Arbitrate | Ev::BusComplete | Ev::SpiDone | Ev::Timer => Vec::new(),
        }
    }
}

/// OAR input carrying CPU transmit commits.
pub const OAR_FROM_PAC: usize = 0;
/// OAR input carrying reflector output.
pub const OAR_FROM_REFLECTOR: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropRecord {
    pub time: SimTime,
    pub reason: DropReason,
    pub packet_id: u64,
    pub port: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveredRecord {
    pub time: SimTime,
    pub packet_id: u64,
    pub src_port: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub time: SimTime,
    pub packet_id: u64,
    pub meta: PacketMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgressRecord {
    pub time: SimTime,
    pub port: usize,
    pub source: usize,
    pub packet_id: u64,
    pub bytes: Arc<[u8]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationRecord {
    pub core: usize,
    pub start: SimTime,
    pub end: SimTime,
    pub cycles: u64,
    /// Packets retired from the PAC during this activation.
    pub packets: u32,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedFrame {
    pub time: SimTime,
    pub bytes: Arc<[u8]>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocStats {
    pub ingress: u64,
    pub delivered: u64,
    pub reflected: u64,
    pub committed: u64,
    pub egressed: u64,
    pub drops: HashMap<DropReason, u64>,
    pub activations: u64,
    pub faults: u64,
}

impl SocStats {
    pub fn dropped(&self, reason: DropReason) -> u64 {
        self.drops.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_drops(&self) -> u64 {
        self.drops.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionReport {
    pub cycles: u64,
    pub elapsed: SimTime,
    pub transactions: Vec<RegisterTransaction>,
}

#[derive(Debug, Clone)]
struct Reflector {
    cfg: ReflectorConfig,
    rng: ChaCha8Rng,
    mirror: Option<i64>,
}

impl Reflector {
    /// Jitter comes in mirrored pairs (u, -u): each draw is uniform on
    /// `[-jitter, +jitter]` and the sample median sits on the nominal latency.
    fn sample(&mut self) -> SimTime {
        let j = self.cfg.jitter.as_ps() as i64;
        let offset = match self.mirror.take() {
            Some(m) => m,
            None => {
                let u = if j == 0 { 0 } else { self.rng.random_range(-j..=j) };
                self.mirror = Some(-u);
                u
            }
        };
        SimTime((self.cfg.latency.as_ps() as i64 + offset).max(0) as u64)
    }
}

struct Names {
    ports: Vec<Component>,
    cores: Vec<Component>,
    iar: Component,
    pac: Component,
    oar: Component,
    bus: Component,
    host: Component,
    reflector: Component,
    spi: Component,
    console: Component,
    debugger: Component,
    timer: Component,
}

impl Names {
    fn new(ports: usize, cores: usize) -> Self {
        Self {
            ports: (0..ports).map(|p| Component::new(&format!("port{p}"))).collect(),
            cores: (0..cores).map(|c| Component::new(&format!("core{c}"))).collect(),
            iar: "iar".into(),
            pac: "pac".into(),
            oar: "oar".into(),
            bus: "bus".into(),
            host: "host".into(),
            reflector: "reflector".into(),
            spi: "spi".into(),
            console: "console".into(),
            debugger: "debugger".into(),
            timer: "timer".into(),
        }
    }
}

pub struct Soc {
    cfg: SocConfig,
    engine: Engine<Ev>,
    names: Names,
    fabric: FabricConfig,
    rx_wire_free: Vec<SimTime>,
    tx_wire_free: Vec<SimTime>,
    iar: Arbiter,
    iar_busy: bool,
    oar: Arbiter,
    oar_busy: bool,
    pac: Pac,
    reflector: Option<Reflector>,
    cores: Vec<Core>,
    parked: Vec<bool>,
    irq_line: bool,
    current: Vec<Option<ActivationRecord>>,
    bus: Interconnect,
    arb_scheduled: bool,
    memory: MemoryModel,
    console: Console,
    debug: DebugUnit,
    spi: SpiController,
    next_packet: u64,
    next_txn: u64,
    host_wait: HashMap<u64, RegisterTransaction>,
    host_done: HashMap<u64, RegisterTransaction>,
    host_bulk_done: HashSet<u64>,
    collect: Vec<Option<Vec<RegisterTransaction>>>,
    packet_log: bool,
    capture: Option<Vec<CapturedFrame>>,
    stats: SocStats,
    drops: Vec<DropRecord>,
    delivered: Vec<DeliveredRecord>,
    commits: Vec<CommitRecord>,
    egress: Vec<EgressRecord>,
    activations: Vec<ActivationRecord>,
    faults: Vec<String>,
}

impl Soc {
    pub fn new(cfg: SocConfig) -> Result<Self> {
        cfg.fabric.validate()?;
        if cfg.cores == 0 {
            return Err(Error::InvalidArgument("at least one core is required".into()));
        }
        let clock = cfg.profile.clock()?;
        let masters = MasterSet::new(cfg.cores)?;
        let cores = (0..cfg.cores)
            .map(|i| Core::new(i, cfg.profile.clone()))
            .collect::<Result<Vec<_>>>()?;
        let memory = MemoryModel::new(cfg.memory_capacity, cfg.memory_timing)?;
        let ports = cfg.fabric.ports;
        let reflector = cfg.reflector.clone().map(|r| Reflector {
            cfg: r,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            mirror: None,
        });
        Ok(Self {
            engine: Engine::new(),
            names: Names::new(ports, cfg.cores),
            fabric: cfg.fabric.clone(),
            rx_wire_free: vec![SimTime::ZERO; ports],
            tx_wire_free: vec![SimTime::ZERO; ports],
            iar: Arbiter::new(ports),
            iar_busy: false,
            oar: Arbiter::new(2),
            oar_busy: false,
            pac: Pac::new(cfg.fabric.rx_depth),
            reflector,
            parked: vec![false; cfg.cores],
            irq_line: false,
            current: vec![None; cfg.cores],
            bus: Interconnect::new(cfg.map.clone(), masters, clock, cfg.bus_latency_cycles),
            arb_scheduled: false,
            memory,
            console: Console::default(),
            debug: DebugUnit::default(),
            spi: SpiController::default(),
            next_packet: 0,
            next_txn: 0,
            host_wait: HashMap::new(),
            host_done: HashMap::new(),
            host_bulk_done: HashSet::new(),
            collect: vec![None; cfg.cores],
            packet_log: true,
            capture: None,
            stats: SocStats::default(),
            drops: Vec::new(),
            delivered: Vec::new(),
            commits: Vec::new(),
            egress: Vec::new(),
            activations: Vec::new(),
            faults: Vec::new(),
            cores,
            cfg,
        })
    }

    // ---- configuration and observation ----

    pub fn config(&self) -> &SocConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.engine.set_tracing(on);
    }

    /// Per-packet logs (drops, deliveries, commits, activations). Counters
    /// in [`SocStats`] are kept regardless.
    pub fn set_packet_log(&mut self, on: bool) {
        self.packet_log = on;
    }

    pub fn enable_capture(&mut self) {
        self.capture.get_or_insert_with(Vec::new);
    }

    pub fn capture(&self) -> &[CapturedFrame] {
        self.capture.as_deref().unwrap_or(&[])
    }

    pub fn trace(&self) -> &EventTrace {
        self.engine.trace()
    }

    pub fn take_trace(&mut self) -> EventTrace {
        self.engine.take_trace()
    }

    pub fn stats(&self) -> &SocStats {
        &self.stats
    }

    pub fn drops(&self) -> &[DropRecord] {
        &self.drops
    }

    pub fn delivered(&self) -> &[DeliveredRecord] {
        &self.delivered
    }

    pub fn commits(&self) -> &[CommitRecord] {
        &self.commits
    }

    pub fn egress(&self) -> &[EgressRecord] {
        &self.egress
    }

    pub fn activations(&self) -> &[ActivationRecord] {
        &self.activations
    }

    pub fn faults(&self) -> &[String] {
        &self.faults
    }

    pub fn pac(&self) -> &Pac {
        &self.pac
    }

    pub fn core(&self, core: usize) -> Result<&Core> {
        self.cores.get(core).ok_or(Error::InvalidCore(core))
    }

    pub fn cores(&self) -> usize {
        self.cores.len()
    }

    pub fn memory(&self) -> &MemoryModel {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut MemoryModel {
        &mut self.memory
    }

    pub fn map(&self) -> &AddressMap {
        self.bus.map()
    }

    pub fn interconnect(&self) -> &Interconnect {
        &self.bus
    }

    pub fn console(&self) -> &Console {
        &self.console
    }

    pub fn console_mut(&mut self) -> &mut Console {
        &mut self.console
    }

    pub fn debug_unit(&self) -> &DebugUnit {
        &self.debug
    }

    pub fn spi(&self) -> &SpiController {
        &self.spi
    }

    pub fn spi_mut(&mut self) -> &mut SpiController {
        &mut self.spi
    }

    /// Bus address of a register inside a mapped device.
    pub fn addr(&self, device: DeviceId, offset: u64) -> u32 {
        self.bus.map().addr(device, offset)
    }

    /// Interrupt input of `core`. Only core 0 is wired to the PAC.
    pub fn interrupt_state(&self, core: usize) -> InterruptState {
        InterruptState {
            line: core == 0 && self.irq_line,
            in_service: self.cores.get(core).is_some_and(Core::in_service),
        }
    }

    /// Latched interrupt line agrees with the PAC registers.
    pub fn interrupt_coherent(&self) -> bool {
        self.irq_line == (self.pac.int_status() & self.pac.int_mask() != 0)
    }

    /// Ingress packets not yet delivered to the CPU, reflected or dropped.
    pub fn in_flight_packets(&self) -> u64 {
        let dropped = self.stats.dropped(DropReason::Oversize)
            + self.stats.dropped(DropReason::Runt)
            + self.stats.dropped(DropReason::RxFull);
        self.stats.ingress - self.stats.delivered - self.stats.reflected - dropped
    }

    // ---- running ----

    /// Processes one event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        match self.engine.pop(RunLimit::Quiescence) {
            Some(f) => {
                self.handle(f);
                true
            }
            None => false,
        }
    }

    pub fn run_until(&mut self, t: SimTime) {
        while let Some(f) = self.engine.pop(RunLimit::Until(t)) {
            self.handle(f);
        }
        self.engine.advance_to(t);
    }

    pub fn run_for(&mut self, dt: SimTime) {
        let t = self.now() + dt;
        self.run_until(t);
    }

    pub fn run_to_quiescence(&mut self) {
        while self.step() {}
    }

    /// Steps until `done` holds; errors if the model runs dry first.
    pub fn run_while_pending(&mut self, mut done: impl FnMut(&Soc) -> bool) -> Result<()> {
        loop {
            if done(self) {
                return Ok(());
            }
            if !self.step() {
                return Err(Error::Fault("event queue drained before condition held".into()));
            }
        }
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.engine.next_time()
    }

    /// Adds a host-side record to the trace at the current time.
    pub fn annotate(&mut self, kind: EventKind, detail: Detail) {
        let c = self.names.host.clone();
        self.engine.note(&c, kind, detail);
    }

    /// Schedules a no-op wakeup, useful to mark host-side waits in the trace.
    pub fn schedule_timer(&mut self, at: SimTime) -> Result<()> {
        let c = self.names.timer.clone();
        self.engine.schedule(at, c, Ev::Timer).map(|_| ())
    }

    // ---- network ingress ----

    /// Host transmits `frame` into `port`, first bit at `at`. Returns the
    /// packet id.
    pub fn port_ingress(&mut self, port: usize, frame: impl Into<Arc<[u8]>>, at: SimTime) -> Result<u64> {
        if port >= self.fabric.ports {
            return Err(Error::InvalidPort {
                port,
                ports: self.fabric.ports,
            });
        }
        let id = self.next_packet;
        let c = self.names.ports[port].clone();
        self.engine.schedule(
            at,
            c,
            Ev::Ingress {
                port,
                id,
                bytes: frame.into(),
            },
        )?;
        self.next_packet += 1;
        Ok(id)
    }

    /// Earliest time a new frame could start on the ingress wire of `port`.
    pub fn ingress_wire_free(&self, port: usize) -> SimTime {
        self.rx_wire_free[port]
    }

    // ---- cores ----

    pub fn bind_isr(&mut self, core: usize, program: Microprogram) -> Result<()> {
        self.cores
            .get_mut(core)
            .ok_or(Error::InvalidCore(core))?
            .bind_isr(program);
        Ok(())
    }

    /// Binds the echo ISR on core 0 and runs the driver attach sequence
    /// (unmasking RX_AVAIL) through the bus.
    pub fn attach_echo_driver(&mut self) -> Result<ExecutionReport> {
        let pac_base = self.addr(DeviceId::Pac, 0);
        let isr = icmp_echo_handler(&self.cfg.profile, pac_base);
        self.bind_isr(0, isr)?;
        self.execute(0, driver_attach(pac_base))
    }

    /// Starts `program` on `core` without waiting for it.
    pub fn start_program(&mut self, core: usize, program: Microprogram) -> Result<()> {
        let now = self.now();
        self.cores
            .get_mut(core)
            .ok_or(Error::InvalidCore(core))?
            .start_program(program, now)?;
        let c = self.names.cores[core].clone();
        self.engine.note(&c, EventKind::CoreResume, vec![("program", "start".into())]);
        self.run_core(core);
        Ok(())
    }

    /// Runs `program` on `core` to completion, processing other events
    /// along the way.
    pub fn execute(&mut self, core: usize, program: Microprogram) -> Result<ExecutionReport> {
        let start = self.now();
        let faults = self.faults.len();
        self.cores.get(core).ok_or(Error::InvalidCore(core))?;
        self.collect[core] = Some(Vec::new());
        let res = self
            .start_program(core, program)
            .and_then(|_| self.run_while_pending(|s| s.cores[core].activity() != Activity::Program));
        let transactions = self.collect[core].take().unwrap_or_default();
        res?;
        if self.faults.len() > faults {
            return Err(Error::Fault(self.faults[faults].clone()));
        }
        Ok(ExecutionReport {
            cycles: self.cores[core].cycles(),
            elapsed: self.now() - start,
            transactions,
        })
    }

    // ---- host ----

    /// Issues a host register access as the DMA master. Returns a handle
    /// for [`Soc::host_result`].
    pub fn host_reg(&mut self, op: BusOp, addr: u32, data: u32) -> u64 {
        let id = self.next_txn;
        self.next_txn += 1;
        let now = self.now();
        let t = match op {
            BusOp::Read => RegisterTransaction::read(id, Master::Dma, addr, now),
            BusOp::Write => RegisterTransaction::write(id, Master::Dma, addr, data, now),
        };
        let half = SimTime(self.cfg.pcie_latency.as_ps() / 2);
        let c = self.names.bus.clone();
        self.engine.schedule_in(
            half,
            c,
            Ev::BusIssue {
                req: BusRequest::Word(t),
            },
        );
        id
    }

    pub fn host_result(&self, id: u64) -> Option<&RegisterTransaction> {
        self.host_done.get(&id)
    }

    /// Host access that waits for its completion.
    pub fn host_reg_blocking(&mut self, op: BusOp, addr: u32, data: u32) -> Result<RegisterTransaction> {
        let id = self.host_reg(op, addr, data);
        self.run_while_pending(|s| s.host_done.contains_key(&id))?;
        let t = self.host_done.remove(&id).expect("completed");
        if t.error {
            return Err(Error::BusError { addr: t.addr as u64 });
        }
        Ok(t)
    }

    pub fn host_read(&mut self, addr: u32) -> Result<u32> {
        self.host_reg_blocking(BusOp::Read, addr, 0).map(|t| t.data)
    }

    pub fn host_write(&mut self, addr: u32, data: u32) -> Result<()> {
        self.host_reg_blocking(BusOp::Write, addr, data).map(|_| ())
    }

    /// Host DMA copy into DDR. Returns a handle for [`Soc::host_bulk_complete`].
    pub fn host_bulk_write(&mut self, addr: u32, data: Arc<[u8]>) -> u64 {
        let id = self.next_txn;
        self.next_txn += 1;
        let b = BulkWrite {
            id,
            master: Master::Dma,
            addr,
            data,
            issue_time: self.now(),
            complete_time: None,
            error: false,
        };
        let half = SimTime(self.cfg.pcie_latency.as_ps() / 2);
        let c = self.names.bus.clone();
        self.engine.schedule_in(
            half,
            c,
            Ev::BusIssue {
                req: BusRequest::Bulk(b),
            },
        );
        id
    }

    pub fn host_bulk_complete(&self, id: u64) -> bool {
        self.host_bulk_done.contains(&id)
    }

    pub fn debugger(&mut self, cmd: DebuggerCommand) -> Result<DebuggerReply> {
        let c = self.names.debugger.clone();
        self.engine
            .note(&c, EventKind::Debugger, vec![("cmd", cmd.as_str().into())]);
        match cmd {
            DebuggerCommand::Pause => {
                self.apply_debug(DebugAction::Pause);
                Ok(DebuggerReply::Ack)
            }
            DebuggerCommand::Resume => {
                self.apply_debug(DebugAction::Resume);
                Ok(DebuggerReply::Ack)
            }
            DebuggerCommand::TraceDump => {
                if !self.cores.iter().all(Core::paused) {
                    return Err(Error::Debugger("trace-dump requires a paused core".into()));
                }
                Ok(DebuggerReply::Dump(
                    self.cores.iter().flat_map(Core::op_trace).collect::<Vec<OpTraceEntry>>(),
                ))
            }
        }
    }

    fn apply_debug(&mut self, action: DebugAction) {
        match action {
            DebugAction::None => {}
            DebugAction::Pause => {
                for core in &mut self.cores {
                    core.set_paused(true);
                }
            }
            DebugAction::Resume => {
                for core in &mut self.cores {
                    core.set_paused(false);
                }
                for c in 0..self.cores.len() {
                    if std::mem::take(&mut self.parked[c]) {
                        let name = self.names.cores[c].clone();
                        self.engine
                            .schedule_in(SimTime::ZERO, name, Ev::CoreResume { core: c });
                    }
                }
                self.update_irq();
            }
        }
    }

    // ---- event handling ----

    fn handle(&mut self, f: Fired<Ev>) {
        match f.payload {
            Ev::Ingress { port, id, bytes } => self.on_ingress(port, id, bytes),
            Ev::MacRx { port, packet } => {
                if let Some(cap) = &mut self.capture {
                    cap.push(CapturedFrame {
                        time: packet.ingress_time,
                        bytes: packet.bytes.clone(),
                    });
                }
                self.iar.enqueue(port, packet);
                self.kick_iar();
            }
            Ev::IarDone { packet } => {
                self.iar_busy = false;
                self.on_iar_done(packet);
                self.kick_iar();
            }
            Ev::Reflect { packet } => self.on_reflect(packet),
            Ev::CoreResume { core } => self.run_core(core),
            Ev::BusIssue { req } => self.on_bus_issue(req),
            Ev::Arbitrate => {
                self.arb_scheduled = false;
                self.arbitrate();
            }
            Ev::BusComplete => self.on_bus_complete(),
            Ev::HostComplete { id } => match self.host_wait.remove(&id) {
                Some(t) => {
                    self.host_done.insert(id, t);
                }
                None => {
                    self.host_bulk_done.insert(id);
                }
            },
            Ev::OarDone {
                port,
                source,
                packet,
            } => {
                self.oar_busy = false;
                let ready = self.now() + self.fabric.mac_latency;
                let start = ready.max(self.tx_wire_free[port]);
                let done = start + self.fabric.serialization(packet.len());
                self.tx_wire_free[port] = done;
                let c = self.names.ports[port].clone();
                self.engine.schedule(done, c, Ev::Egress { port, source, packet })
                    .expect("egress is in the future");
                self.kick_oar();
            }
            Ev::Egress {
                port,
                source,
                mut packet,
            } => {
                let now = self.now();
                packet.egress_time = Some(now);
                self.stats.egressed += 1;
                if let Some(cap) = &mut self.capture {
                    cap.push(CapturedFrame {
                        time: now,
                        bytes: packet.bytes.clone(),
                    });
                }
                self.egress.push(EgressRecord {
                    time: now,
                    port,
                    source,
                    packet_id: packet.id,
                    bytes: packet.bytes,
                });
            }
            Ev::SpiDone => self.on_spi_done(),
            Ev::Timer => {}
        }
    }

    fn drop_packet(&mut self, reason: DropReason, packet_id: u64, port: Option<usize>, component: Component) {
        *self.stats.drops.entry(reason).or_insert(0) += 1;
        let mut detail = vec![("id", packet_id.to_string())];
        if let Some(p) = port {
            detail.push(("port", p.to_string()));
        }
        self.engine.note(&component, EventKind::Drop(reason), detail);
        if self.packet_log {
            self.drops.push(DropRecord {
                time: self.now(),
                reason,
                packet_id,
                port,
            });
        }
    }

    fn on_ingress(&mut self, port: usize, id: u64, bytes: Arc<[u8]>) {
        self.stats.ingress += 1;
        let comp = self.names.ports[port].clone();
        let reason = if bytes.len() > MAX_FRAME {
            Some(DropReason::Oversize)
        } else if bytes.len() < MIN_FRAME {
            Some(DropReason::Runt)
        } else {
            None
        };
        if let Some(reason) = reason {
            self.drop_packet(reason, id, Some(port), comp);
            return;
        }
        let now = self.now();
        let packet = Packet::ingress(id, bytes, port, now).expect("length validated");
        let start = now.max(self.rx_wire_free[port]);
        let done = start + self.fabric.serialization(packet.len());
        self.rx_wire_free[port] = done;
        self.engine
            .schedule(done + self.fabric.mac_latency, comp, Ev::MacRx { port, packet })
            .expect("future");
    }

    fn kick_iar(&mut self) {
        if self.iar_busy {
            return;
        }
        let Some((port, packet)) = self.iar.grant() else {
            return;
        };
        self.iar_busy = true;
        let c = self.names.iar.clone();
        self.engine.note(
            &c,
            EventKind::IarGrant,
            vec![("port", port.to_string()), ("id", packet.id.to_string())],
        );
        let dt = self.fabric.stream_transfer(packet.len());
        self.engine.schedule_in(dt, c, Ev::IarDone { packet });
    }

    fn on_iar_done(&mut self, packet: Packet) {
        if let Some(r) = &mut self.reflector {
            let dt = r.sample();
            let c = self.names.reflector.clone();
            self.engine.schedule_in(dt, c, Ev::Reflect { packet });
            return;
        }
        match self.pac.rx_accept(packet) {
            Ok(()) => self.update_irq(),
            Err(p) => {
                let c = self.names.pac.clone();
                let port = port_from_bitmap(p.meta.src_port);
                self.drop_packet(DropReason::RxFull, p.id, port, c);
            }
        }
    }

    fn on_reflect(&mut self, packet: Packet) {
        self.stats.reflected += 1;
        let src = port_from_bitmap(packet.meta.src_port).unwrap_or(0);
        let bytes: Arc<[u8]> = echo_reply(&packet.bytes)
            .map(Arc::from)
            .unwrap_or_else(|| packet.bytes.clone());
        let out = Packet {
            id: packet.id,
            meta: PacketMeta {
                len_bytes: bytes.len() as u16,
                src_port: 0,
                dst_port: one_hot(src),
            },
            bytes,
            ingress_time: packet.ingress_time,
            egress_time: None,
        };
        self.oar.enqueue(OAR_FROM_REFLECTOR, out);
        self.kick_oar();
    }

    fn kick_oar(&mut self) {
        while !self.oar_busy {
            let Some((source, packet)) = self.oar.grant() else {
                return;
            };
            let c = self.names.oar.clone();
            match oar_route(&packet.meta, self.fabric.ports) {
                Ok(port) => {
                    self.oar_busy = true;
                    self.engine.note(
                        &c,
                        EventKind::OarGrant,
                        vec![
                            ("source", source.to_string()),
                            ("id", packet.id.to_string()),
                            ("port", port.to_string()),
                        ],
                    );
                    let dt = self.fabric.stream_transfer(packet.len());
                    self.engine.schedule_in(dt, c, Ev::OarDone { port, source, packet });
                }
                Err(reason) => self.drop_packet(reason, packet.id, None, c),
            }
        }
    }

    /// Re-evaluates the interrupt line and dispatches the ISR on core 0.
    fn update_irq(&mut self) {
        let line = self.pac.interrupt();
        if line != self.irq_line {
            self.irq_line = line;
            let c = self.names.pac.clone();
            self.engine.note(
                &c,
                EventKind::Interrupt,
                vec![("line", (line as u8).to_string())],
            );
        }
        if !line {
            return;
        }
        let core = &self.cores[0];
        if core.paused() || !core.is_idle() || core.isr().is_none() {
            return;
        }
        let now = self.now();
        if let Err(e) = self.cores[0].start_isr(now) {
            self.fault(0, e.to_string());
            return;
        }
        self.current[0] = Some(ActivationRecord {
            core: 0,
            start: now,
            end: now,
            cycles: 0,
            packets: 0,
            bytes: 0,
        });
        let c = self.names.cores[0].clone();
        self.engine.note(&c, EventKind::IsrStart, Vec::new());
        self.run_core(0);
    }

    fn fault(&mut self, core: usize, msg: String) {
        self.stats.faults += 1;
        let c = self.names.cores[core].clone();
        self.engine.note(&c, EventKind::Fault, vec![("msg", msg.clone())]);
        self.faults.push(msg);
    }

    fn run_core(&mut self, core: usize) {
        if self.cores[core].paused() {
            self.parked[core] = true;
            return;
        }
        let now = self.now();
        let comp = self.names.cores[core].clone();
        let in_isr = self.cores[core].in_service();
        let step = self.cores[core].advance(now);
        match step {
            Ok(Step::Compute(n)) => {
                let dt = self.cores[core].clock().cycles_to_time(n);
                self.engine.schedule_in(dt, comp, Ev::CoreResume { core });
            }
            Ok(Step::Bus { op, addr, data, setup }) => {
                let dt = self.cores[core].clock().cycles_to_time(setup);
                let id = self.next_txn;
                self.next_txn += 1;
                let issue = now + dt;
                let t = match op {
                    BusOp::Read => RegisterTransaction::read(id, Master::Core(core), addr, issue),
                    BusOp::Write => RegisterTransaction::write(id, Master::Core(core), addr, data, issue),
                };
                let bus = self.names.bus.clone();
                self.engine
                    .schedule_in(dt, bus, Ev::BusIssue { req: BusRequest::Word(t) });
            }
            Ok(Step::Mem { addr, len, write, data }) => {
                let op = if write { BusOp::Write } else { BusOp::Read };
                let latency = match self.memory.mem_access(addr, len, op, &data) {
                    Ok(a) => a.latency,
                    Err(e) => {
                        self.fault(core, e.to_string());
                        self.memory.latency(len)
                    }
                };
                let stall = self.cores[core].mem_stall(latency);
                let dt = self.cores[core].clock().cycles_to_time(stall);
                self.engine.schedule_in(dt, comp, Ev::CoreResume { core });
            }
            Ok(Step::Done) => self.core_finished(core, in_isr, comp),
            Err(e) => {
                self.fault(core, e.to_string());
                self.core_finished(core, in_isr, comp);
            }
        }
    }

    fn core_finished(&mut self, core: usize, in_isr: bool, comp: Component) {
        let cycles = self.cores[core].cycles();
        match self.current[core].take().filter(|_| in_isr) {
            Some(mut rec) => {
                rec.end = self.now();
                rec.cycles = cycles;
                self.stats.activations += 1;
                self.engine.note(
                    &comp,
                    EventKind::IsrEnd,
                    vec![("cycles", cycles.to_string()), ("packets", rec.packets.to_string())],
                );
                self.activations.push(rec);
            }
            None => self
                .engine
                .note(&comp, EventKind::ProgramEnd, vec![("cycles", cycles.to_string())]),
        }
        self.update_irq();
    }

    fn on_bus_issue(&mut self, req: BusRequest) {
        self.bus.submit(req);
        if !self.bus.is_busy() && !self.arb_scheduled {
            self.arb_scheduled = true;
            let c = self.names.bus.clone();
            self.engine.schedule_in(SimTime::ZERO, c, Ev::Arbitrate);
        }
    }

    fn arbitrate(&mut self) {
        let now = self.now();
        let memory = &self.memory;
        let granted = self.bus.try_grant(now, |req, target| match target {
            Target::Device {
                device: DeviceId::Ddr,
                ..
            } => {
                let len = match req {
                    BusRequest::Word(_) => 4,
                    BusRequest::Bulk(b) => b.data.len() as u64,
                };
                memory.latency(len)
            }
            _ => SimTime::ZERO,
        });
        let Some(InFlight {
            request,
            complete_time,
            ..
        }) = granted
        else {
            return;
        };
        let detail = vec![
            ("master", request.master().to_string()),
            ("id", request.id().to_string()),
        ];
        let complete = *complete_time;
        let c = self.names.bus.clone();
        self.engine.note(&c, EventKind::BusGrant, detail);
        self.engine.schedule(complete, c, Ev::BusComplete).expect("future");
    }

    fn on_bus_complete(&mut self) {
        let now = self.now();
        let Some(flight) = self.bus.finish() else {
            return;
        };
        match flight.request {
            BusRequest::Word(mut t) => {
                t.complete_time = Some(now);
                self.access(&mut t, flight.target);
                match t.master {
                    Master::Core(c) => {
                        if let Some(log) = &mut self.collect[c] {
                            log.push(t.clone());
                        }
                        let waited = now - t.issue_time;
                        self.cores[c].bus_done(t.data, waited);
                        self.run_core(c);
                    }
                    Master::Dma => {
                        let half = SimTime(self.cfg.pcie_latency.as_ps() - self.cfg.pcie_latency.as_ps() / 2);
                        let id = t.id;
                        self.host_wait.insert(id, t);
                        let c = self.names.host.clone();
                        self.engine.schedule_in(half, c, Ev::HostComplete { id });
                    }
                }
            }
            BusRequest::Bulk(mut b) => {
                b.complete_time = Some(now);
                match flight.target {
                    Target::Device {
                        device: DeviceId::Ddr,
                        offset,
                    } => {
                        if let Err(e) = self.memory.write(offset, &b.data) {
                            b.error = true;
                            let c = self.names.bus.clone();
                            self.engine
                                .note(&c, EventKind::BusError, vec![("msg", e.to_string())]);
                        }
                    }
                    _ => {
                        b.error = true;
                        let c = self.names.bus.clone();
                        self.engine.note(
                            &c,
                            EventKind::BusError,
                            vec![("addr", format!("{:#010x}", b.addr))],
                        );
                    }
                }
                let c = self.names.host.clone();
                let half = SimTime(self.cfg.pcie_latency.as_ps() - self.cfg.pcie_latency.as_ps() / 2);
                self.engine.schedule_in(half, c, Ev::HostComplete { id: b.id });
            }
        }
        if self.bus.has_pending() && !self.arb_scheduled {
            self.arb_scheduled = true;
            let c = self.names.bus.clone();
            self.engine.schedule_in(SimTime::ZERO, c, Ev::Arbitrate);
        }
    }

    /// Performs a word access on its target at completion time.
    fn access(&mut self, t: &mut RegisterTransaction, target: Target) {
        let (device, offset) = match target {
            Target::Device { device, offset } => (device, offset),
            Target::Unmapped => {
                t.error = true;
                if t.op == BusOp::Read {
                    t.data = BUS_ERROR_READ;
                }
                let c = self.names.bus.clone();
                self.engine.note(
                    &c,
                    EventKind::BusError,
                    vec![
                        ("master", t.master.to_string()),
                        ("addr", format!("{:#010x}", t.addr)),
                    ],
                );
                return;
            }
        };
        match device {
            DeviceId::Pac => {
                let a = match t.op {
                    BusOp::Read => self.pac.read(offset),
                    BusOp::Write => self.pac.write(offset, t.data),
                };
                if t.op == BusOp::Read {
                    t.data = a.data;
                }
                if let Some(p) = a.retired {
                    self.on_retired(p);
                }
                if let Some(commit) = a.commit {
                    self.on_commit(commit);
                }
                self.update_irq();
            }
            DeviceId::Console => match t.op {
                BusOp::Read => t.data = self.console.read(offset),
                BusOp::Write => {
                    if let Some(b) = self.console.write(offset, t.data) {
                        let c = self.names.console.clone();
                        self.engine
                            .note(&c, EventKind::Console, vec![("byte", b.to_string())]);
                    }
                }
            },
            DeviceId::Debugger => {
                let paused = self.cores.iter().all(Core::paused);
                let dump = if paused {
                    self.cores.iter().map(|c| c.op_trace().len()).sum::<usize>() as u32
                } else {
                    0
                };
                match t.op {
                    BusOp::Read => t.data = self.debug.read(offset, paused, dump),
                    BusOp::Write => {
                        let action = self.debug.write(offset, t.data);
                        if action != DebugAction::None {
                            let c = self.names.debugger.clone();
                            self.engine.note(
                                &c,
                                EventKind::Debugger,
                                vec![("cmd", format!("{action:?}").to_lowercase())],
                            );
                        }
                        self.apply_debug(action);
                    }
                }
            }
            DeviceId::Spi => match t.op {
                BusOp::Read => t.data = self.spi.read(offset),
                BusOp::Write => {
                    if let Some(bytes) = self.spi.write(offset, t.data) {
                        let dt = serialization_delay(bytes, self.cfg.spi_clock_hz);
                        let c = self.names.spi.clone();
                        self.engine.note(&c, EventKind::Spi, vec![("copy", bytes.to_string())]);
                        self.engine.schedule_in(dt, c, Ev::SpiDone);
                    }
                }
            },
            DeviceId::Ddr => {
                let r = match t.op {
                    BusOp::Read => self.memory.read_word(offset).map(|w| t.data = w),
                    BusOp::Write => self.memory.write_word(offset, t.data),
                };
                if r.is_err() {
                    t.error = true;
                    if t.op == BusOp::Read {
                        t.data = BUS_ERROR_READ;
                    }
                    let c = self.names.bus.clone();
                    self.engine.note(
                        &c,
                        EventKind::BusError,
                        vec![("addr", format!("{:#010x}", t.addr))],
                    );
                }
            }
        }
    }

    fn on_retired(&mut self, p: Packet) {
        let now = self.now();
        self.stats.delivered += 1;
        if let Some(a) = self.current[0].as_mut() {
            a.packets += 1;
            a.bytes += p.len() as u64;
        }
        if self.packet_log {
            self.delivered.push(DeliveredRecord {
                time: now,
                packet_id: p.id,
                src_port: port_from_bitmap(p.meta.src_port).unwrap_or(0),
                len: p.len(),
            });
        }
    }

    fn on_commit(&mut self, commit: pac::TxCommit) {
        let id = self.next_packet;
        self.next_packet += 1;
        self.stats.committed += 1;
        let now = self.now();
        if self.packet_log {
            self.commits.push(CommitRecord {
                time: now,
                packet_id: id,
                meta: commit.meta,
            });
        }
        let c = self.names.pac.clone();
        self.engine.note(
            &c,
            EventKind::OarRoute,
            vec![("id", id.to_string()), ("len", commit.bytes.len().to_string())],
        );
        let packet = Packet {
            id,
            bytes: commit.bytes.into(),
            meta: commit.meta,
            ingress_time: now,
            egress_time: None,
        };
        self.oar.enqueue(OAR_FROM_PAC, packet);
        self.kick_oar();
    }

    fn on_spi_done(&mut self) {
        if let Some((image, dest)) = self.spi.finish() {
            if let Err(e) = self.memory.load_image(&image, dest) {
                self.spi.fail();
                let c = self.names.spi.clone();
                self.engine.note(&c, EventKind::Fault, vec![("msg", e.to_string())]);
            }
        }
    }
}
