use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::ClockDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoreKind {
    Beri,
    Riscv,
}

impl CoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CoreKind::Beri => "beri",
            CoreKind::Riscv => "riscv",
        }
    }

    /// Platform clock of each build.
    pub fn nominal_freq_hz(self) -> u64 {
        match self {
            CoreKind::Beri => 120_000_000,
            CoreKind::Riscv => 50_000_000,
        }
    }
}

impl fmt::Display for CoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beri" => Ok(CoreKind::Beri),
            "riscv" | "risc-v" => Ok(CoreKind::Riscv),
            _ => Err(Error::InvalidArgument(format!("unknown core `{s}` (beri|riscv)"))),
        }
    }
}

/// Cycle costs of the abstract core.
///
/// The default calibration puts roughly 212k cycles of work on every
/// received 1500-byte frame, which lands near 6.9 Mbit/s of goodput at
/// 120 MHz.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreProfile {
    pub kind: CoreKind,
    pub freq_hz: u64,
    pub c_isr_entry: u64,
    pub c_isr_exit: u64,
    /// CPU cycles around each register transaction (address setup, load/store issue).
    pub c_reg_setup: u64,
    /// Per 32-bit word of packet processing.
    pub c_word_compute: u64,
    /// Per-packet kernel network stack overhead.
    pub c_stack: u64,
    /// Copy each received frame to a DDR mbuf (and back for replies).
    pub mbuf_copy: bool,
}

impl CoreProfile {
    pub fn new(kind: CoreKind) -> Self {
        Self {
            kind,
            freq_hz: kind.nominal_freq_hz(),
            c_isr_entry: 1_500,
            c_isr_exit: 500,
            c_reg_setup: 10,
            c_word_compute: 12,
            c_stack: 200_000,
            mbuf_copy: true,
        }
    }

    pub fn beri() -> Self {
        Self::new(CoreKind::Beri)
    }

    pub fn riscv() -> Self {
        Self::new(CoreKind::Riscv)
    }

    pub fn with_freq(mut self, freq_hz: u64) -> Self {
        self.freq_hz = freq_hz;
        self
    }

    /// All ISR costs zeroed; useful when isolating bus/PIO cost.
    pub fn zero_cost(kind: CoreKind) -> Self {
        Self {
            c_isr_entry: 0,
            c_isr_exit: 0,
            c_reg_setup: 0,
            c_word_compute: 0,
            c_stack: 0,
            mbuf_copy: false,
            ..Self::new(kind)
        }
    }

    pub fn clock(&self) -> Result<ClockDomain> {
        ClockDomain::new("cpu", self.freq_hz)
    }
}

impl Default for CoreProfile {
    fn default() -> Self {
        Self::beri()
    }
}
