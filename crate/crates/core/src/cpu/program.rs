//! Cycle-cost microprograms.
//!
//! A microprogram is a tree of primitive operations. Register operations go
//! over the interconnect, `Compute` burns CPU cycles, `MemAccess` stalls for
//! a wall-clock DRAM latency and `Loop` repeats a body a number of times
//! taken from values read earlier in the same activation. `Transform` is a
//! zero-cycle data rewrite; its cost is carried by surrounding `Compute` ops.

use std::fmt;
use std::sync::Arc;

pub const SLOTS: usize = 8;

/// Where a read result goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sink {
    Discard,
    Slot(u8),
    /// Appended little-endian to the activation's receive buffer.
    RxBuffer,
}

/// Where a written value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Const(u32),
    Slot(u8),
    /// Next little-endian word of the transmit buffer.
    TxWord,
    /// Length of the transmit buffer in bytes.
    TxLen,
    /// TX_META value addressing the port the current packet came from
    /// (taken from the source bitmap in the RX_META slot).
    ReplyMeta(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Count {
    Const(u64),
    SlotValue(u8),
    /// `ceil(slot / 4)`: words of a byte length held in a slot.
    WordsInSlot(u8),
    /// Words in the transmit buffer.
    TxWords,
    /// 1 if a transform produced a reply, else 0.
    HasReply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Build an ICMP echo reply from the received frame (length in the given slot).
    EchoReply { len_slot: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    RegRead { addr: u32, sink: Sink },
    RegWrite { addr: u32, value: Source },
    Compute(u64),
    /// DDR access at a fixed DDR offset. Writes store the receive buffer.
    MemAccess { addr: u64, len: Count, write: bool },
    Loop { count: Count, body: Microprogram },
    Transform(Transform),
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::RegRead { addr, .. } => write!(f, "REG_READ {addr:#010x}"),
            Op::RegWrite { addr, .. } => write!(f, "REG_WRITE {addr:#010x}"),
            Op::Compute(n) => write!(f, "COMPUTE {n}"),
            Op::MemAccess { addr, write, .. } => {
                write!(f, "MEM_{} {addr:#x}", if *write { "WRITE" } else { "READ" })
            }
            Op::Loop { count, .. } => write!(f, "LOOP {count:?}"),
            Op::Transform(t) => write!(f, "TRANSFORM {t:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Microprogram {
    ops: Arc<[Op]>,
}

impl Microprogram {
    pub fn new(ops: Vec<Op>) -> Self {
        Self { ops: ops.into() }
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Wraps the program in ISR entry and exit costs.
    pub fn as_isr(&self, entry: u64, exit: u64) -> Microprogram {
        let mut ops = Vec::with_capacity(self.ops.len() + 2);
        ops.push(Op::Compute(entry));
        ops.extend(self.ops.iter().cloned());
        ops.push(Op::Compute(exit));
        Microprogram::new(ops)
    }

    /// True if the program (recursively) contains a `MemAccess`.
    pub fn has_mem_access(&self) -> bool {
        self.ops.iter().any(|op| match op {
            Op::MemAccess { .. } => true,
            Op::Loop { body, .. } => body.has_mem_access(),
            _ => false,
        })
    }
}

impl From<Vec<Op>> for Microprogram {
    fn from(ops: Vec<Op>) -> Self {
        Self::new(ops)
    }
}

impl FromIterator<Op> for Microprogram {
    fn from_iter<I: IntoIterator<Item = Op>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}
