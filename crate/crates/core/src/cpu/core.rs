//! Interpreter state for one core.
//!
//! [`Core::advance`] runs zero-time operations and stops at the next
//! operation that takes time, describing it as a [`Step`]. The system model
//! performs the step (bus transaction, DRAM stall, compute delay) and
//! resumes the core when it is done.

use std::collections::VecDeque;

use super::profile::CoreProfile;
use super::program::{Count, Microprogram, Op, Sink, Source, Transform, SLOTS};
use crate::error::{Error, Result};
use crate::frame::rewrite_echo_reply;
use crate::interconnect::BusOp;
use crate::sim::{ClockDomain, SimTime};

/// Iterations above which a loop is treated as runaway.
pub const LOOP_GUARD: u64 = 10_000_000;
/// Depth of the executed-op ring exposed through the debugger.
pub const OP_TRACE_DEPTH: usize = 1024;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecContext {
    pub slots: [u32; SLOTS],
    pub rx: Vec<u8>,
    pub tx: Vec<u8>,
    tx_cursor: usize,
    pub reply: bool,
}

impl ExecContext {
    fn slot(&self, i: u8) -> u32 {
        self.slots[i as usize % SLOTS]
    }

    fn count(&self, c: Count) -> u64 {
        match c {
            Count::Const(n) => n,
            Count::SlotValue(s) => self.slot(s) as u64,
            Count::WordsInSlot(s) => (self.slot(s) as u64).div_ceil(4),
            Count::TxWords => (self.tx.len() as u64).div_ceil(4),
            Count::HasReply => self.reply as u64,
        }
    }

    fn source(&mut self, s: Source) -> u32 {
        match s {
            Source::Const(v) => v,
            Source::Slot(i) => self.slot(i),
            Source::TxLen => self.tx.len() as u32,
            Source::ReplyMeta(i) => ((self.slot(i) >> 16) & 0xFF) << 24,
            Source::TxWord => {
                let mut w = [0u8; 4];
                let start = self.tx_cursor.min(self.tx.len());
                let end = (start + 4).min(self.tx.len());
                w[..end - start].copy_from_slice(&self.tx[start..end]);
                self.tx_cursor += 4;
                u32::from_le_bytes(w)
            }
        }
    }

    fn sink(&mut self, sink: Sink, value: u32) {
        match sink {
            Sink::Discard => {}
            Sink::Slot(i) => self.slots[i as usize % SLOTS] = value,
            Sink::RxBuffer => self.rx.extend_from_slice(&value.to_le_bytes()),
        }
    }

    fn transform(&mut self, t: Transform) {
        match t {
            Transform::EchoReply { len_slot } => {
                let len = (self.slot(len_slot) as usize).min(self.rx.len());
                let mut frame = self.rx[..len].to_vec();
                self.reply = rewrite_echo_reply(&mut frame);
                self.tx = if self.reply { frame } else { Vec::new() };
                self.tx_cursor = 0;
            }
        }
    }
}

/// A timed operation the system must carry out for the core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Compute(u64),
    /// Issue a bus transaction once `setup` CPU cycles have elapsed.
    Bus {
        op: BusOp,
        addr: u32,
        data: u32,
        setup: u64,
    },
    Mem {
        addr: u64,
        len: u64,
        write: bool,
        data: Vec<u8>,
    },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Idle,
    Isr,
    Program,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpTraceEntry {
    pub time: SimTime,
    pub core: usize,
    pub op: String,
}

#[derive(Debug, Clone)]
struct Frame {
    program: Microprogram,
    pc: usize,
    remaining: u64,
}

#[derive(Debug, Clone)]
pub struct Core {
    id: usize,
    profile: CoreProfile,
    clock: ClockDomain,
    isr: Option<Microprogram>,
    activity: Activity,
    stack: Vec<Frame>,
    ctx: ExecContext,
    pending_sink: Option<Sink>,
    paused: bool,
    cycles: u64,
    started_at: SimTime,
    activations: u64,
    total_cycles: u64,
    ring: VecDeque<(SimTime, Op)>,
}

impl Core {
    pub fn new(id: usize, profile: CoreProfile) -> Result<Self> {
        let clock = profile.clock()?;
        Ok(Self {
            id,
            profile,
            clock,
            isr: None,
            activity: Activity::Idle,
            stack: Vec::new(),
            ctx: ExecContext::default(),
            pending_sink: None,
            paused: false,
            cycles: 0,
            started_at: SimTime::ZERO,
            activations: 0,
            total_cycles: 0,
            ring: VecDeque::with_capacity(OP_TRACE_DEPTH),
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn profile(&self) -> &CoreProfile {
        &self.profile
    }

    pub fn clock(&self) -> &ClockDomain {
        &self.clock
    }

    pub fn activity(&self) -> Activity {
        self.activity
    }

    pub fn is_idle(&self) -> bool {
        self.activity == Activity::Idle
    }

    pub fn in_service(&self) -> bool {
        self.activity == Activity::Isr
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn set_paused(&mut self, paused: bool) {
        self.paused = paused;
    }

    pub fn isr(&self) -> Option<&Microprogram> {
        self.isr.as_ref()
    }

    pub fn bind_isr(&mut self, program: Microprogram) {
        self.isr = Some(program);
    }

    pub fn activations(&self) -> u64 {
        self.activations
    }

    pub fn total_cycles(&self) -> u64 {
        self.total_cycles
    }

    /// Cycles charged to the current (or last) activation.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn started_at(&self) -> SimTime {
        self.started_at
    }

    pub fn context(&self) -> &ExecContext {
        &self.ctx
    }

    /// Starts an ISR activation wrapped in the profile's entry/exit costs.
    pub fn start_isr(&mut self, now: SimTime) -> Result<()> {
        let body = self
            .isr
            .clone()
            .ok_or_else(|| Error::Fault(format!("core{} has no ISR bound", self.id)))?;
        let program = body.as_isr(self.profile.c_isr_entry, self.profile.c_isr_exit);
        self.start(program, Activity::Isr, now)
    }

    pub fn start_program(&mut self, program: Microprogram, now: SimTime) -> Result<()> {
        self.start(program, Activity::Program, now)
    }

    fn start(&mut self, program: Microprogram, activity: Activity, now: SimTime) -> Result<()> {
        if self.activity != Activity::Idle {
            return Err(Error::CoreBusy(self.id));
        }
        self.activity = activity;
        self.stack.clear();
        self.stack.push(Frame {
            program,
            pc: 0,
            remaining: 0,
        });
        self.ctx = ExecContext::default();
        self.pending_sink = None;
        self.cycles = 0;
        self.started_at = now;
        Ok(())
    }

    fn record(&mut self, now: SimTime, op: &Op) {
        if self.ring.len() == OP_TRACE_DEPTH {
            self.ring.pop_front();
        }
        self.ring.push_back((now, op.clone()));
    }

    pub fn op_trace(&self) -> Vec<OpTraceEntry> {
        self.ring
            .iter()
            .map(|(time, op)| OpTraceEntry {
                time: *time,
                core: self.id,
                op: op.to_string(),
            })
            .collect()
    }

    /// Runs until the next timed step. Returns [`Step::Done`] once the
    /// program has finished; the core is then idle again.
    pub fn advance(&mut self, now: SimTime) -> Result<Step> {
        loop {
            let Some(frame) = self.stack.last_mut() else {
                return Ok(self.finish());
            };
            if frame.pc >= frame.program.len() {
                if frame.remaining > 0 {
                    frame.remaining -= 1;
                    frame.pc = 0;
                } else {
                    self.stack.pop();
                }
                continue;
            }
            let op = frame.program.ops()[frame.pc].clone();
            frame.pc += 1;
            self.record(now, &op);
            match op {
                Op::Compute(0) => {}
                Op::Compute(n) => {
                    self.cycles += n;
                    return Ok(Step::Compute(n));
                }
                Op::RegRead { addr, sink } => {
                    self.pending_sink = Some(sink);
                    self.cycles += self.profile.c_reg_setup;
                    return Ok(Step::Bus {
                        op: BusOp::Read,
                        addr,
                        data: 0,
                        setup: self.profile.c_reg_setup,
                    });
                }
                Op::RegWrite { addr, value } => {
                    let data = self.ctx.source(value);
                    self.pending_sink = None;
                    self.cycles += self.profile.c_reg_setup;
                    return Ok(Step::Bus {
                        op: BusOp::Write,
                        addr,
                        data,
                        setup: self.profile.c_reg_setup,
                    });
                }
                Op::MemAccess { addr, len, write } => {
                    let len = self.ctx.count(len);
                    let data = if write {
                        let mut d = self.ctx.rx.clone();
                        d.resize(len as usize, 0);
                        d
                    } else {
                        Vec::new()
                    };
                    return Ok(Step::Mem {
                        addr,
                        len,
                        write,
                        data,
                    });
                }
                Op::Loop { count, body } => {
                    let n = self.ctx.count(count);
                    if n > LOOP_GUARD {
                        self.abort();
                        return Err(Error::Fault(format!(
                            "core{}: loop of {n} iterations exceeds guard {LOOP_GUARD}",
                            self.id
                        )));
                    }
                    if n > 0 && !body.is_empty() {
                        self.stack.push(Frame {
                            program: body,
                            pc: 0,
                            remaining: n - 1,
                        });
                    }
                }
                Op::Transform(t) => self.ctx.transform(t),
            }
        }
    }

    /// Bus transaction finished after `waited` (issue to completion).
    pub fn bus_done(&mut self, data: u32, waited: SimTime) {
        self.cycles += self.clock.time_to_cycles(waited);
        if let Some(sink) = self.pending_sink.take() {
            self.ctx.sink(sink, data);
        }
    }

    /// DRAM stall of `latency`, rounded up to whole CPU cycles.
    pub fn mem_stall(&mut self, latency: SimTime) -> u64 {
        let cycles = self.clock.time_to_cycles(latency);
        self.cycles += cycles;
        cycles
    }

    fn finish(&mut self) -> Step {
        if self.activity == Activity::Isr {
            self.activations += 1;
        }
        self.total_cycles += self.cycles;
        self.activity = Activity::Idle;
        Step::Done
    }

    fn abort(&mut self) {
        self.stack.clear();
        self.activity = Activity::Idle;
    }
}
