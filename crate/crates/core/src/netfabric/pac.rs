//! Packet Controller: receive FIFO and transmit staging behind a word-wide
//! register interface.
//!
//! | offset | name       | access | contents                                   |
//! |--------|------------|--------|--------------------------------------------|
//! | 0x00   | INT_STATUS | RO     | bit0 RX_AVAIL                              |
//! | 0x04   | INT_MASK   | RW     | bit0 enables the RX interrupt              |
//! | 0x08   | RX_LEN     | RO     | head packet length in bytes                |
//! | 0x0C   | RX_META    | RO     | `[15:0]` length, `[23:16]` source bitmap   |
//! | 0x10   | RX_DATA    | RO     | pops the next little-endian word           |
//! | 0x14   | TX_LEN     | RW     | bytes to commit                            |
//! | 0x18   | TX_META    | RW     | `[31:24]` destination bitmap               |
//! | 0x1C   | TX_DATA    | WO     | appends a little-endian word               |
//! | 0x20   | TX_CMD     | WO     | 1 commits the staged packet                |
//! | 0x24   | STATUS     | RO     | `[15:0]` rx occupancy, bit16 underflow, bit17 txempty; flags clear on read |

use std::collections::VecDeque;

use super::packet::{Packet, PacketMeta};
use crate::frame::MAX_FRAME;

pub const INT_STATUS: u64 = 0x00;
pub const INT_MASK: u64 = 0x04;
pub const RX_LEN: u64 = 0x08;
pub const RX_META: u64 = 0x0C;
pub const RX_DATA: u64 = 0x10;
pub const TX_LEN: u64 = 0x14;
pub const TX_META: u64 = 0x18;
pub const TX_DATA: u64 = 0x1C;
pub const TX_CMD: u64 = 0x20;
pub const STATUS: u64 = 0x24;

pub const RX_AVAIL: u32 = 1 << 0;
pub const STATUS_UNDERFLOW: u32 = 1 << 16;
pub const STATUS_TXEMPTY: u32 = 1 << 17;

/// A transmit commit leaving the PAC for the output arbiter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxCommit {
    pub bytes: Vec<u8>,
    pub meta: PacketMeta,
}

/// Side effects of a register access the surrounding system must act on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Access {
    pub data: u32,
    /// The head packet was read to its end and left the FIFO.
    pub retired: Option<Packet>,
    pub commit: Option<TxCommit>,
}

#[derive(Debug, Clone)]
pub struct Pac {
    depth: usize,
    rx_fifo: VecDeque<Packet>,
    rx_word: usize,
    tx_staging: Vec<u8>,
    tx_len: u32,
    tx_meta: u32,
    int_mask: u32,
    underflow: bool,
    txempty: bool,
}

impl Pac {
    pub fn new(depth: usize) -> Self {
        assert!(depth > 0, "rx fifo depth must be positive");
        Self {
            depth,
            rx_fifo: VecDeque::with_capacity(depth),
            rx_word: 0,
            tx_staging: Vec::new(),
            tx_len: 0,
            tx_meta: 0,
            int_mask: 0,
            underflow: false,
            txempty: false,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn occupancy(&self) -> usize {
        self.rx_fifo.len()
    }

    pub fn int_status(&self) -> u32 {
        if self.rx_fifo.is_empty() {
            0
        } else {
            RX_AVAIL
        }
    }

    pub fn int_mask(&self) -> u32 {
        self.int_mask
    }

    pub fn set_int_mask(&mut self, mask: u32) {
        self.int_mask = mask;
    }

    /// Level of the interrupt line.
    pub fn interrupt(&self) -> bool {
        self.int_status() & self.int_mask != 0
    }

    /// Accepts a packet from the input arbiter, or hands it back when full.
    pub fn rx_accept(&mut self, p: Packet) -> Result<(), Packet> {
        if self.rx_fifo.len() >= self.depth {
            return Err(p);
        }
        self.rx_fifo.push_back(p);
        Ok(())
    }

    pub fn head(&self) -> Option<&Packet> {
        self.rx_fifo.front()
    }

    fn status(&mut self) -> u32 {
        let mut s = self.rx_fifo.len() as u32 & 0xFFFF;
        if self.underflow {
            s |= STATUS_UNDERFLOW;
        }
        if self.txempty {
            s |= STATUS_TXEMPTY;
        }
        self.underflow = false;
        self.txempty = false;
        s
    }

    fn pop_word(&mut self) -> Access {
        let Some(head) = self.rx_fifo.front() else {
            self.underflow = true;
            return Access::default();
        };
        let start = self.rx_word * 4;
        let mut word = [0u8; 4];
        let end = (start + 4).min(head.bytes.len());
        word[..end - start].copy_from_slice(&head.bytes[start..end]);
        self.rx_word += 1;
        let retired = if self.rx_word * 4 >= head.bytes.len() {
            self.rx_word = 0;
            self.rx_fifo.pop_front()
        } else {
            None
        };
        Access {
            data: u32::from_le_bytes(word),
            retired,
            commit: None,
        }
    }

    pub fn read(&mut self, offset: u64) -> Access {
        let data = match offset {
            INT_STATUS => self.int_status(),
            INT_MASK => self.int_mask,
            RX_LEN => self.head().map_or(0, |p| p.len() as u32),
            RX_META => self.head().map_or(0, |p| p.meta.to_word() & 0x00FF_FFFF),
            RX_DATA => return self.pop_word(),
            TX_LEN => self.tx_len,
            TX_META => self.tx_meta,
            STATUS => self.status(),
            _ => 0,
        };
        Access {
            data,
            ..Access::default()
        }
    }

    pub fn write(&mut self, offset: u64, value: u32) -> Access {
        match offset {
            INT_MASK => self.int_mask = value,
            TX_LEN => self.tx_len = value,
            TX_META => self.tx_meta = value,
            TX_DATA => {
                if self.tx_staging.len() < MAX_FRAME + 4 {
                    self.tx_staging.extend_from_slice(&value.to_le_bytes());
                }
            }
            TX_CMD if value == 1 => return self.commit(),
            _ => {}
        }
        Access::default()
    }

    fn commit(&mut self) -> Access {
        if self.tx_len == 0 {
            self.txempty = true;
            self.tx_staging.clear();
            return Access::default();
        }
        let len = self.tx_len as usize;
        let mut bytes = std::mem::take(&mut self.tx_staging);
        bytes.resize(len, 0);
        let meta = PacketMeta {
            len_bytes: len.min(u16::MAX as usize) as u16,
            src_port: 0,
            dst_port: (self.tx_meta >> 24) as u8,
        };
        Access {
            commit: Some(TxCommit { bytes, meta }),
            ..Access::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimTime;

    fn packet(bytes: Vec<u8>) -> Packet {
        let mut padded = bytes;
        padded.resize(padded.len().max(60), 0);
        Packet::ingress(0, padded.into(), 1, SimTime(0)).unwrap()
    }

    #[test]
    fn rx_sets_status_and_interrupt() {
        let mut pac = Pac::new(16);
        pac.set_int_mask(1);
        pac.rx_accept(packet(vec![0; 60])).unwrap();
        assert_eq!(pac.int_status() & RX_AVAIL, 1);
        assert!(pac.interrupt());
    }

    #[test]
    fn masked_interrupt_stays_low() {
        let mut pac = Pac::new(16);
        pac.rx_accept(packet(vec![0; 60])).unwrap();
        assert_eq!(pac.int_status(), RX_AVAIL);
        assert!(!pac.interrupt());
    }

    #[test]
    fn full_fifo_rejects() {
        let mut pac = Pac::new(2);
        pac.rx_accept(packet(vec![0; 60])).unwrap();
        pac.rx_accept(packet(vec![0; 60])).unwrap();
        assert!(pac.rx_accept(packet(vec![0; 60])).is_err());
        assert_eq!(pac.occupancy(), 2);
    }

    #[test]
    fn little_endian_words() {
        let mut pac = Pac::new(4);
        pac.rx_accept(packet((1..=8).collect())).unwrap();
        assert_eq!(pac.read(RX_DATA).data, 0x0403_0201);
        assert_eq!(pac.read(RX_DATA).data, 0x0807_0605);
    }

    #[test]
    fn last_word_zero_padded_and_retires() {
        let mut pac = Pac::new(4);
        pac.set_int_mask(1);
        let bytes: Vec<u8> = (0..61).map(|i| i as u8 + 1).collect();
        pac.rx_accept(Packet::ingress(0, bytes.clone().into(), 0, SimTime(0)).unwrap())
            .unwrap();
        assert_eq!(pac.read(RX_LEN).data, 61);
        let mut last = Access::default();
        for _ in 0..16 {
            last = pac.read(RX_DATA);
        }
        assert_eq!(last.data, 61);
        assert!(last.retired.is_some());
        assert_eq!(pac.int_status(), 0);
        assert!(!pac.interrupt());
        assert_eq!(pac.read(RX_LEN).data, 0);
    }

    #[test]
    fn empty_read_underflows() {
        let mut pac = Pac::new(4);
        assert_eq!(pac.read(RX_DATA).data, 0);
        let s = pac.read(STATUS).data;
        assert_ne!(s & STATUS_UNDERFLOW, 0);
        assert_eq!(pac.read(STATUS).data & STATUS_UNDERFLOW, 0);
    }

    #[test]
    fn rx_meta_reports_source() {
        let mut pac = Pac::new(4);
        pac.rx_accept(Packet::ingress(0, vec![0u8; 100].into(), 3, SimTime(0)).unwrap())
            .unwrap();
        assert_eq!(pac.read(RX_META).data, 100 | (0b1000 << 16));
    }

    #[test]
    fn tx_commit() {
        let mut pac = Pac::new(4);
        for w in 0..16u32 {
            pac.write(TX_DATA, w);
        }
        pac.write(TX_LEN, 64);
        pac.write(TX_META, 0b0000_0001 << 24);
        let c = pac.write(TX_CMD, 1).commit.unwrap();
        assert_eq!(c.bytes.len(), 64);
        assert_eq!(c.meta.dst_port, 1);
        assert_eq!(&c.bytes[4..8], &1u32.to_le_bytes());
    }

    #[test]
    fn tx_cmd_with_zero_len_is_noop() {
        let mut pac = Pac::new(4);
        pac.write(TX_DATA, 7);
        assert!(pac.write(TX_CMD, 1).commit.is_none());
        assert_ne!(pac.read(STATUS).data & STATUS_TXEMPTY, 0);
    }
}
