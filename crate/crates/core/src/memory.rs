//! DDR3 model.
//!
//! Access latency is fixed in wall-clock time and does not depend on any
//! clock domain: slowing the CPU leaves DRAM timing untouched.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::interconnect::{BusOp, GIB};
use crate::sim::SimTime;

pub const MAX_CAPACITY: u64 = 32 * GIB;
const PAGE_BITS: u32 = 16;
const PAGE_SIZE: u64 = 1 << PAGE_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryTiming {
    /// First-word access time.
    pub t_access: SimTime,
    /// Each additional 32-bit word.
    pub t_word: SimTime,
}

impl Default for MemoryTiming {
    fn default() -> Self {
        Self {
            t_access: SimTime::from_ns(50),
            t_word: SimTime::from_ns(5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MemoryModel {
    capacity: u64,
    timing: MemoryTiming,
    pages: HashMap<u64, Box<[u8]>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemAccess {
    /// Bytes read; empty for writes.
    pub data: Vec<u8>,
    pub latency: SimTime,
}

impl MemoryModel {
    pub fn new(capacity: u64, timing: MemoryTiming) -> Result<Self> {
        if capacity == 0 || capacity > MAX_CAPACITY {
            return Err(Error::InvalidArgument(format!(
                "memory capacity {capacity} outside 1..={MAX_CAPACITY}"
            )));
        }
        if timing.t_access == SimTime::ZERO || timing.t_word == SimTime::ZERO {
            return Err(Error::InvalidArgument("memory latencies must be positive".into()));
        }
        Ok(Self {
            capacity,
            timing,
            pages: HashMap::new(),
        })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn timing(&self) -> MemoryTiming {
        self.timing
    }

    /// `t_access + t_word * (ceil(len / 4) - 1)`.
    pub fn latency(&self, len: u64) -> SimTime {
        let extra_words = len.div_ceil(4).saturating_sub(1);
        SimTime(self.timing.t_access.0 + self.timing.t_word.0 * extra_words)
    }

    fn check(&self, addr: u64, len: u64) -> Result<()> {
        match addr.checked_add(len) {
            Some(end) if end <= self.capacity => Ok(()),
            _ => Err(Error::OutOfRange {
                addr,
                len,
                capacity: self.capacity,
            }),
        }
    }

    pub fn read(&self, addr: u64, len: u64) -> Result<Vec<u8>> {
        self.check(addr, len)?;
        let mut out = vec![0u8; len as usize];
        let mut done = 0u64;
        while done < len {
            let a = addr + done;
            let page = a >> PAGE_BITS;
            let off = (a & (PAGE_SIZE - 1)) as usize;
            let n = ((PAGE_SIZE - off as u64).min(len - done)) as usize;
            if let Some(p) = self.pages.get(&page) {
                out[done as usize..done as usize + n].copy_from_slice(&p[off..off + n]);
            }
            done += n as u64;
        }
        Ok(out)
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) -> Result<()> {
        self.check(addr, data.len() as u64)?;
        let mut done = 0usize;
        while done < data.len() {
            let a = addr + done as u64;
            let page = a >> PAGE_BITS;
            let off = (a & (PAGE_SIZE - 1)) as usize;
            let n = (PAGE_SIZE as usize - off).min(data.len() - done);
            let p = self
                .pages
                .entry(page)
                .or_insert_with(|| vec![0u8; PAGE_SIZE as usize].into_boxed_slice());
            p[off..off + n].copy_from_slice(&data[done..done + n]);
            done += n;
        }
        Ok(())
    }

    /// Timed access. Writes store `data`; reads ignore it and return `len` bytes.
    pub fn mem_access(&mut self, addr: u64, len: u64, op: BusOp, data: &[u8]) -> Result<MemAccess> {
        self.check(addr, len)?;
        let latency = self.latency(len);
        match op {
            BusOp::Read => Ok(MemAccess {
                data: self.read(addr, len)?,
                latency,
            }),
            BusOp::Write => {
                let n = (len as usize).min(data.len());
                self.write(addr, &data[..n])?;
                Ok(MemAccess {
                    data: Vec::new(),
                    latency,
                })
            }
        }
    }

    /// Untimed initialization, as done by a testbench before simulation starts.
    pub fn load_image(&mut self, image: &[u8], base: u64) -> Result<()> {
        if image.is_empty() {
            return Ok(());
        }
        self.write(base, image)
    }

    pub fn read_word(&self, addr: u64) -> Result<u32> {
        let b = self.read(addr, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn write_word(&mut self, addr: u64, value: u32) -> Result<()> {
        self.write(addr, &value.to_le_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem() -> MemoryModel {
        MemoryModel::new(4 * GIB, MemoryTiming::default()).unwrap()
    }

    #[test]
    fn word_read_latency() {
        let mut m = mem();
        let a = m.mem_access(0, 4, BusOp::Read, &[]).unwrap();
        assert_eq!(a.latency, SimTime(50_000));
    }

    #[test]
    fn burst_latency() {
        let mut m = mem();
        let a = m.mem_access(0, 64, BusOp::Read, &[]).unwrap();
        assert_eq!(a.latency, SimTime::from_ns(125));
    }

    #[test]
    fn unwritten_reads_zero() {
        let m = mem();
        assert_eq!(m.read(0x1234_5678, 8).unwrap(), vec![0; 8]);
    }

    #[test]
    fn write_spanning_pages_reads_back() {
        let mut m = mem();
        let data: Vec<u8> = (0..200_000u32).map(|i| (i * 7) as u8).collect();
        m.write(PAGE_SIZE - 3, &data).unwrap();
        assert_eq!(m.read(PAGE_SIZE - 3, data.len() as u64).unwrap(), data);
    }

    #[test]
    fn image_bounds() {
        let mut m = MemoryModel::new(1024, MemoryTiming::default()).unwrap();
        m.load_image(&[], 1024).unwrap();
        assert!(m.load_image(&[1, 2, 3], 1022).is_err());
        m.load_image(&[1, 2], 1022).unwrap();
        assert_eq!(m.read(1022, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn out_of_range_access() {
        let mut m = MemoryModel::new(1024, MemoryTiming::default()).unwrap();
        assert!(m.mem_access(1020, 8, BusOp::Read, &[]).is_err());
    }

    #[test]
    fn capacity_limits() {
        assert!(MemoryModel::new(MAX_CAPACITY, MemoryTiming::default()).is_ok());
        assert!(MemoryModel::new(MAX_CAPACITY + 1, MemoryTiming::default()).is_err());
    }
}
