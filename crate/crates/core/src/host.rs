//! Host-side devices (console, serial debugger, SPI/SD controller) and the
//! FPGA programming and boot orchestration.
//!
//! Register maps, as offsets from each device's base:
//!
//! | device   | 0x0        | 0x4       | 0x8        | 0xC      |
//! |----------|------------|-----------|------------|----------|
//! | console  | TX_DATA    | RX_DATA   | STATUS     |          |
//! | debugger | CMD        | STATUS    | BOOT_ADDR  | DUMP_LEN |
//! | spi      | CMD        | STATUS    | DEST       | LEN      |

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::cpu::{driver_attach, CoreKind, Microprogram, Op, OpTraceEntry, Source};
use crate::error::{Error, Result};
use crate::interconnect::DeviceId;
use crate::sim::{EventKind, SimTime};
use crate::soc::Soc;

pub const CONSOLE_TX_DATA: u64 = 0x0;
pub const CONSOLE_RX_DATA: u64 = 0x4;
pub const CONSOLE_STATUS: u64 = 0x8;
pub const CONSOLE_TX_READY: u32 = 1 << 0;
pub const CONSOLE_RX_AVAIL: u32 = 1 << 1;

/// UART-like console.
#[derive(Debug, Clone, Default)]
pub struct Console {
    output: Vec<u8>,
    input: VecDeque<u8>,
    last_tx: u8,
}

impl Console {
    pub fn output(&self) -> &[u8] {
        &self.output
    }

    pub fn push_input(&mut self, bytes: &[u8]) {
        self.input.extend(bytes);
    }

    pub fn read(&mut self, offset: u64) -> u32 {
        match offset {
            CONSOLE_TX_DATA => self.last_tx as u32,
            CONSOLE_RX_DATA => self.input.pop_front().map_or(0, u32::from),
            CONSOLE_STATUS => {
                let mut s = CONSOLE_TX_READY;
                if !self.input.is_empty() {
                    s |= CONSOLE_RX_AVAIL;
                }
                s
            }
            _ => 0,
        }
    }

    /// Returns the byte emitted, if any.
    pub fn write(&mut self, offset: u64, value: u32) -> Option<u8> {
        if offset != CONSOLE_TX_DATA {
            return None;
        }
        let b = value as u8;
        self.last_tx = b;
        self.output.push(b);
        Some(b)
    }
}

pub const DEBUG_CMD: u64 = 0x0;
pub const DEBUG_STATUS: u64 = 0x4;
pub const DEBUG_BOOT_ADDR: u64 = 0x8;
pub const DEBUG_DUMP_LEN: u64 = 0xC;
pub const DEBUG_CMD_PAUSE: u32 = 1;
pub const DEBUG_CMD_RESUME: u32 = 2;
pub const DEBUG_STATUS_PAUSED: u32 = 1 << 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DebugAction {
    None,
    Pause,
    Resume,
}

/// Register side of the serial debugger. Pause state lives in the cores.
#[derive(Debug, Clone, Default)]
pub struct DebugUnit {
    boot_addr: u32,
}

impl DebugUnit {
    pub fn boot_addr(&self) -> u32 {
        self.boot_addr
    }

    pub fn read(&self, offset: u64, paused: bool, dump_len: u32) -> u32 {
        match offset {
            DEBUG_STATUS => {
                if paused {
                    DEBUG_STATUS_PAUSED
                } else {
                    0
                }
            }
            DEBUG_BOOT_ADDR => self.boot_addr,
            DEBUG_DUMP_LEN => dump_len,
            _ => 0,
        }
    }

    pub fn write(&mut self, offset: u64, value: u32) -> DebugAction {
        match (offset, value) {
            (DEBUG_CMD, DEBUG_CMD_PAUSE) => DebugAction::Pause,
            (DEBUG_CMD, DEBUG_CMD_RESUME) => DebugAction::Resume,
            (DEBUG_BOOT_ADDR, v) => {
                self.boot_addr = v;
                DebugAction::None
            }
            _ => DebugAction::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DebuggerCommand {
    Pause,
    Resume,
    /// Only valid while paused.
    TraceDump,
}

impl DebuggerCommand {
    pub fn as_str(self) -> &'static str {
        match self {
            DebuggerCommand::Pause => "pause",
            DebuggerCommand::Resume => "resume",
            DebuggerCommand::TraceDump => "trace-dump",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DebuggerReply {
    Ack,
    Dump(Vec<OpTraceEntry>),
}

pub const SPI_CMD: u64 = 0x0;
pub const SPI_STATUS: u64 = 0x4;
pub const SPI_DEST: u64 = 0x8;
pub const SPI_LEN: u64 = 0xC;
pub const SPI_CMD_COPY: u32 = 1;
pub const SPI_BUSY: u32 = 1 << 0;
pub const SPI_DONE: u32 = 1 << 1;
pub const SPI_ERROR: u32 = 1 << 2;

/// SD card behind an SPI controller. A copy command moves the whole card
/// image into DDR at `DEST`, taking one SPI clock per bit.
#[derive(Debug, Clone, Default)]
pub struct SpiController {
    card: Option<Arc<[u8]>>,
    dest: u32,
    busy: bool,
    done: bool,
    error: bool,
}

impl SpiController {
    pub fn insert_card(&mut self, image: Arc<[u8]>) {
        self.card = Some(image);
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn has_error(&self) -> bool {
        self.error
    }

    pub fn read(&self, offset: u64) -> u32 {
        match offset {
            SPI_STATUS => {
                (self.busy as u32 * SPI_BUSY) | (self.done as u32 * SPI_DONE) | (self.error as u32 * SPI_ERROR)
            }
            SPI_DEST => self.dest,
            SPI_LEN => self.card.as_ref().map_or(0, |c| c.len() as u32),
            _ => 0,
        }
    }

    /// Returns the number of bytes to transfer when a copy starts.
    pub fn write(&mut self, offset: u64, value: u32) -> Option<usize> {
        match (offset, value) {
            (SPI_DEST, v) => self.dest = v,
            (SPI_CMD, SPI_CMD_COPY) if !self.busy => {
                self.done = false;
                match &self.card {
                    Some(card) => {
                        self.error = false;
                        self.busy = true;
                        return Some(card.len());
                    }
                    None => self.error = true,
                }
            }
            _ => {}
        }
        None
    }

    /// Ends a copy, returning the image and its DDR destination.
    pub fn finish(&mut self) -> Option<(Arc<[u8]>, u64)> {
        if !self.busy {
            return None;
        }
        self.busy = false;
        self.done = true;
        self.card.clone().map(|c| (c, self.dest as u64))
    }

    pub fn fail(&mut self) {
        self.done = false;
        self.error = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BootState {
    ProgramFpga,
    ResetAndPauseCore,
    LoadKernelToDdr3,
    ConfigureBootRegisters,
    UnpauseCore,
    /// RISC-V only: the bootloader copies the kernel from the SD card.
    SpiSdCopy,
    KernelEntry,
    ConsoleActive,
    NetIfUp,
    NfsMounted,
}

const BERI_SEQUENCE: [BootState; 9] = [
    BootState::ProgramFpga,
    BootState::ResetAndPauseCore,
    BootState::LoadKernelToDdr3,
    BootState::ConfigureBootRegisters,
    BootState::UnpauseCore,
    BootState::KernelEntry,
    BootState::ConsoleActive,
    BootState::NetIfUp,
    BootState::NfsMounted,
];

const RISCV_SEQUENCE: [BootState; 6] = [
    BootState::ProgramFpga,
    BootState::SpiSdCopy,
    BootState::KernelEntry,
    BootState::ConsoleActive,
    BootState::NetIfUp,
    BootState::NfsMounted,
];

impl BootState {
    pub fn as_str(self) -> &'static str {
        match self {
            BootState::ProgramFpga => "ProgramFpga",
            BootState::ResetAndPauseCore => "ResetAndPauseCore",
            BootState::LoadKernelToDdr3 => "LoadKernelToDdr3",
            BootState::ConfigureBootRegisters => "ConfigureBootRegisters",
            BootState::UnpauseCore => "UnpauseCore",
            BootState::SpiSdCopy => "SpiSdCopy",
            BootState::KernelEntry => "KernelEntry",
            BootState::ConsoleActive => "ConsoleActive",
            BootState::NetIfUp => "NetIfUp",
            BootState::NfsMounted => "NfsMounted",
        }
    }

    /// Canonical order for a core.
    pub fn sequence(kind: CoreKind) -> &'static [BootState] {
        match kind {
            CoreKind::Beri => &BERI_SEQUENCE,
            CoreKind::Riscv => &RISCV_SEQUENCE,
        }
    }
}

impl fmt::Display for BootState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootConfig {
    pub fpga_program: SimTime,
    pub kernel_entry: SimTime,
    pub netif_up: SimTime,
    pub nfs_mount: SimTime,
    /// Host DMA chunk size for the kernel load.
    pub chunk_bytes: usize,
    /// DDR offset the kernel is loaded to.
    pub load_offset: u64,
    pub banner: String,
}

impl Default for BootConfig {
    fn default() -> Self {
        Self {
            fpga_program: SimTime::from_us(20_000),
            kernel_entry: SimTime::from_us(1_000),
            netif_up: SimTime::from_us(2_000),
            nfs_mount: SimTime::from_us(50_000),
            chunk_bytes: 1 << 20,
            load_offset: 0,
            banner: "netsoc: kernel up\n".into(),
        }
    }
}

/// States entered, in order, with their entry times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootTrace {
    pub core: CoreKind,
    pub states: Vec<(SimTime, BootState)>,
    pub error: Option<String>,
    pub console: Vec<u8>,
    /// Console bytes present when ConsoleActive was entered.
    pub console_at_active: Option<usize>,
}

impl BootTrace {
    fn new(core: CoreKind) -> Self {
        Self {
            core,
            states: Vec::new(),
            error: None,
            console: Vec::new(),
            console_at_active: None,
        }
    }

    pub fn visited(&self) -> Vec<BootState> {
        self.states.iter().map(|(_, s)| *s).collect()
    }

    pub fn terminal(&self) -> Option<BootState> {
        self.states.last().map(|(_, s)| *s)
    }

    pub fn success(&self) -> bool {
        self.error.is_none() && self.visited() == BootState::sequence(self.core)
    }

    pub fn result(&self) -> Result<()> {
        match &self.error {
            None => Ok(()),
            Some(reason) => Err(Error::Boot {
                state: self.terminal().map_or("none", BootState::as_str).into(),
                reason: reason.clone(),
            }),
        }
    }

    /// `time_ps,state` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ps,state\n");
        for (t, s) in &self.states {
            out.push_str(&format!("{},{}\n", t.as_ps(), s));
        }
        out
    }
}

/// Walks the boot flow of `kind` on `soc` with the kernel image at `image`.
/// Failures end the trace in the state where they occurred.
pub fn run_boot(soc: &mut Soc, kind: CoreKind, image: &Path, cfg: &BootConfig) -> BootTrace {
    let mut trace = BootTrace::new(kind);
    let r = match kind {
        CoreKind::Beri => boot_beri(soc, image, cfg, &mut trace),
        CoreKind::Riscv => boot_riscv(soc, image, cfg, &mut trace),
    };
    if let Err(e) = r {
        soc.annotate(EventKind::Boot, vec![("error", e.to_string())]);
        trace.error = Some(e.to_string());
    }
    trace.console = soc.console().output().to_vec();
    trace
}

fn enter(soc: &mut Soc, trace: &mut BootTrace, state: BootState) {
    soc.annotate(EventKind::Boot, vec![("state", state.as_str().into())]);
    trace.states.push((soc.now(), state));
}

fn read_image(image: &Path) -> Result<Arc<[u8]>> {
    std::fs::read(image).map(Arc::from).map_err(|source| Error::Io {
        path: image.to_path_buf(),
        source,
    })
}

fn console_banner(soc: &Soc, banner: &str) -> Microprogram {
    let tx = soc.addr(DeviceId::Console, CONSOLE_TX_DATA);
    banner
        .bytes()
        .map(|b| Op::RegWrite {
            addr: tx,
            value: Source::Const(b as u32),
        })
        .collect()
}

/// KernelEntry through NfsMounted, shared by both cores.
fn kernel_phase(soc: &mut Soc, cfg: &BootConfig, trace: &mut BootTrace) -> Result<()> {
    enter(soc, trace, BootState::KernelEntry);
    soc.run_for(cfg.kernel_entry);
    let banner = console_banner(soc, &cfg.banner);
    soc.execute(0, banner)?;

    enter(soc, trace, BootState::ConsoleActive);
    let bytes = soc.console().output().len();
    trace.console_at_active = Some(bytes);
    if bytes == 0 {
        return Err(Error::Fault("no console output before ConsoleActive".into()));
    }

    enter(soc, trace, BootState::NetIfUp);
    let pac = soc.addr(DeviceId::Pac, 0);
    soc.execute(0, driver_attach(pac))?;
    soc.run_for(cfg.netif_up);

    enter(soc, trace, BootState::NfsMounted);
    soc.run_for(cfg.nfs_mount);
    Ok(())
}

fn boot_beri(soc: &mut Soc, image: &Path, cfg: &BootConfig, trace: &mut BootTrace) -> Result<()> {
    enter(soc, trace, BootState::ProgramFpga);
    soc.run_for(cfg.fpga_program);

    enter(soc, trace, BootState::ResetAndPauseCore);
    let dbg_cmd = soc.addr(DeviceId::Debugger, DEBUG_CMD);
    soc.host_write(dbg_cmd, DEBUG_CMD_PAUSE)?;

    enter(soc, trace, BootState::LoadKernelToDdr3);
    let image = read_image(image)?;
    let ddr = soc
        .map()
        .range_of(DeviceId::Ddr)
        .ok_or_else(|| Error::AddressMap("no DDR window".into()))?;
    let base = ddr.base + cfg.load_offset;
    let chunk = cfg.chunk_bytes.max(4);
    let mut ids = Vec::new();
    for (i, part) in image.chunks(chunk).enumerate() {
        let addr = base + (i * chunk) as u64;
        let addr = u32::try_from(addr).map_err(|_| Error::BusError { addr })?;
        ids.push(soc.host_bulk_write(addr, Arc::from(part)));
    }
    soc.run_while_pending(|s| ids.iter().all(|&id| s.host_bulk_complete(id)))?;
    let loaded = soc.memory().read(cfg.load_offset, image.len() as u64)?;
    if loaded[..] != image[..] {
        return Err(Error::Fault("kernel image did not land in DDR".into()));
    }

    enter(soc, trace, BootState::ConfigureBootRegisters);
    let boot_addr = soc.addr(DeviceId::Debugger, DEBUG_BOOT_ADDR);
    soc.host_write(boot_addr, base as u32)?;

    enter(soc, trace, BootState::UnpauseCore);
    soc.host_write(dbg_cmd, DEBUG_CMD_RESUME)?;
    let status = soc.host_read(soc.addr(DeviceId::Debugger, DEBUG_STATUS))?;
    if status & DEBUG_STATUS_PAUSED != 0 {
        return Err(Error::Debugger("core still paused after resume".into()));
    }

    kernel_phase(soc, cfg, trace)
}

fn boot_riscv(soc: &mut Soc, image: &Path, cfg: &BootConfig, trace: &mut BootTrace) -> Result<()> {
    enter(soc, trace, BootState::ProgramFpga);
    soc.run_for(cfg.fpga_program);

    enter(soc, trace, BootState::SpiSdCopy);
    let image = read_image(image)?;
    if soc.map().range_of(DeviceId::Spi).is_none() {
        return Err(Error::AddressMap("SPI controller is not mapped".into()));
    }
    soc.spi_mut().insert_card(image);
    let bootloader: Microprogram = vec![
        Op::RegWrite {
            addr: soc.addr(DeviceId::Spi, SPI_DEST),
            value: Source::Const(cfg.load_offset as u32),
        },
        Op::RegWrite {
            addr: soc.addr(DeviceId::Spi, SPI_CMD),
            value: Source::Const(SPI_CMD_COPY),
        },
    ]
    .into();
    soc.execute(0, bootloader)?;
    soc.run_while_pending(|s| !s.spi().is_busy())?;
    if !soc.spi().is_done() || soc.spi().has_error() {
        return Err(Error::Fault("SD card copy failed".into()));
    }

    kernel_phase(soc, cfg, trace)
}
