use std::sync::Arc;

use crate::error::{Error, Result};
use crate::frame::{MAX_FRAME, MIN_FRAME};
use crate::sim::{SimTime, PS_PER_SECOND};

/// One-hot port bitmap for `port` (0..8).
pub fn one_hot(port: usize) -> u8 {
    assert!(port < 8, "port {port} does not fit an 8-bit bitmap");
    1 << port
}

/// The single port named by a one-hot bitmap; `None` for zero or multi-bit.
pub fn port_from_bitmap(bitmap: u8) -> Option<usize> {
    (bitmap.count_ones() == 1).then(|| bitmap.trailing_zeros() as usize)
}

/// Fabric metadata carried alongside each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PacketMeta {
    pub len_bytes: u16,
    pub src_port: u8,
    pub dst_port: u8,
}

impl PacketMeta {
    /// `[15:0]` length, `[23:16]` source bitmap, `[31:24]` destination bitmap.
    pub fn to_word(self) -> u32 {
        self.len_bytes as u32 | (self.src_port as u32) << 16 | (self.dst_port as u32) << 24
    }

    pub fn from_word(w: u32) -> Self {
        Self {
            len_bytes: w as u16,
            src_port: (w >> 16) as u8,
            dst_port: (w >> 24) as u8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub bytes: Arc<[u8]>,
    pub meta: PacketMeta,
    pub ingress_time: SimTime,
    pub egress_time: Option<SimTime>,
}

impl Packet {
    /// Annotates a frame arriving on `port`.
    pub fn ingress(id: u64, bytes: Arc<[u8]>, port: usize, at: SimTime) -> Result<Self> {
        validate_len(bytes.len())?;
        Ok(Self {
            id,
            meta: PacketMeta {
                len_bytes: bytes.len() as u16,
                src_port: one_hot(port),
                dst_port: 0,
            },
            bytes,
            ingress_time: at,
            egress_time: None,
        })
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

pub fn validate_len(len: usize) -> Result<()> {
    if (MIN_FRAME..=MAX_FRAME).contains(&len) {
        Ok(())
    } else {
        Err(Error::InvalidFrame(len))
    }
}

/// Wire time of `len` bytes at `line_rate_bps`, rounded up to a picosecond.
pub fn serialization_delay(len: usize, line_rate_bps: u64) -> SimTime {
    let bits = len as u128 * 8;
    SimTime((bits * PS_PER_SECOND as u128).div_ceil(line_rate_bps as u128) as u64)
}

/// One beat of a stream transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamBeat {
    pub data: Vec<u8>,
    /// Bit i set means byte i is valid; low-aligned.
    pub keep: u64,
    pub last: bool,
}

pub fn beat_count(len: usize, width: usize) -> usize {
    len.div_ceil(width)
}

/// Splits a frame into `width`-byte beats (width 1..=64).
pub fn to_beats(bytes: &[u8], width: usize) -> Vec<StreamBeat> {
    assert!((1..=64).contains(&width), "stream width {width} unsupported");
    let n = beat_count(bytes.len(), width);
    bytes
        .chunks(width)
        .enumerate()
        .map(|(i, chunk)| {
            let mut data = chunk.to_vec();
            data.resize(width, 0);
            let keep = if chunk.len() == 64 {
                u64::MAX
            } else {
                (1u64 << chunk.len()) - 1
            };
            StreamBeat {
                data,
                keep,
                last: i + 1 == n,
            }
        })
        .collect()
}

pub fn from_beats(beats: &[StreamBeat]) -> Vec<u8> {
    let mut out = Vec::new();
    for b in beats {
        let valid = b.keep.trailing_ones() as usize;
        out.extend_from_slice(&b.data[..valid.min(b.data.len())]);
        if b.last {
            break;
        }
    }
    out
}
