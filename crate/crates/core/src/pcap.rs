//! Nanosecond-resolution pcap output (Ethernet link type, little-endian).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::soc::CapturedFrame;

/// Magic for nanosecond timestamps.
pub const MAGIC_NS: u32 = 0xA1B2_3C4D;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const SNAPLEN: u32 = 65_535;
pub const HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

pub struct PcapWriter<W: Write> {
    out: W,
}

impl<W: Write> PcapWriter<W> {
    /// Writes the global header immediately.
    pub fn new(mut out: W) -> io::Result<Self> {
        out.write_all(&MAGIC_NS.to_le_bytes())?;
        out.write_all(&2u16.to_le_bytes())?;
        out.write_all(&4u16.to_le_bytes())?;
        out.write_all(&0i32.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&SNAPLEN.to_le_bytes())?;
        out.write_all(&LINKTYPE_ETHERNET.to_le_bytes())?;
        Ok(Self { out })
    }

    /// `time_ps` is truncated to whole nanoseconds.
    pub fn write_frame(&mut self, time_ps: u64, bytes: &[u8]) -> io::Result<()> {
        let ns = time_ps / 1_000;
        let sec = u32::try_from(ns / 1_000_000_000)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "timestamp beyond pcap range"))?;
        let nsec = (ns % 1_000_000_000) as u32;
        let len = bytes.len() as u32;
        let caplen = len.min(SNAPLEN);
        self.out.write_all(&sec.to_le_bytes())?;
        self.out.write_all(&nsec.to_le_bytes())?;
        self.out.write_all(&caplen.to_le_bytes())?;
        self.out.write_all(&len.to_le_bytes())?;
        self.out.write_all(&bytes[..caplen as usize])
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn to_bytes(frames: &[CapturedFrame]) -> Vec<u8> {
    let mut w = PcapWriter::new(Vec::new()).expect("writing to a Vec");
    for f in frames {
        w.write_frame(f.time.as_ps(), &f.bytes).expect("writing to a Vec");
    }
    w.into_inner().expect("writing to a Vec")
}

pub fn write_file(path: &Path, frames: &[CapturedFrame]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = PcapWriter::new(BufWriter::new(file)).map_err(io_err)?;
    for f in frames {
        w.write_frame(f.time.as_ps(), &f.bytes).map_err(io_err)?;
    }
    w.into_inner().map_err(io_err)?;
    Ok(())
}
