//! Internet checksum (RFC 1071).

/// One's-complement sum of big-endian 16-bit words, odd tail zero-padded,
/// not yet complemented.
pub fn ones_complement_sum(data: &[u8], initial: u32) -> u16 {
    let mut sum = initial as u64;
    let mut chunks = data.chunks_exact(2);
    for w in &mut chunks {
        sum += u16::from_be_bytes([w[0], w[1]]) as u64;
    }
    if let [last] = chunks.remainder() {
        sum += (*last as u64) << 8;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    sum as u16
}

/// The 16-bit checksum to place in a header field.
pub fn checksum16(data: &[u8]) -> u16 {
    !ones_complement_sum(data, 0)
}

/// True when `data` (with its checksum field filled in) sums to 0xFFFF.
pub fn verify(data: &[u8]) -> bool {
    ones_complement_sum(data, 0) == 0xFFFF
}
