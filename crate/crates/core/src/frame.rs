//! Ethernet, IPv4, ICMP and UDP frame construction and parsing.

use crate::cpu::checksum::checksum16;

pub const ETH_HEADER: usize = 14;
pub const IPV4_HEADER: usize = 20;
pub const ICMP_HEADER: usize = 8;
pub const UDP_HEADER: usize = 8;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_UDP: u8 = 17;
pub const ICMP_ECHO_REPLY: u8 = 0;
pub const ICMP_ECHO_REQUEST: u8 = 8;

/// Smallest frame on the wire once padded (without FCS).
pub const MIN_FRAME: usize = 60;
/// Jumbo ceiling.
pub const MAX_FRAME: usize = 9000;

pub type MacAddr = [u8; 6];
pub type Ipv4Addr = [u8; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
}

/// The host PC side of the test setup.
pub const HOST: Endpoint = Endpoint {
    mac: [0x00, 0x0f, 0x53, 0x00, 0x00, 0x01],
    ip: [10, 0, 0, 1],
};

/// The SoC's network interface.
pub const DEVICE: Endpoint = Endpoint {
    mac: [0x02, 0x4e, 0x53, 0x6f, 0x43, 0x00],
    ip: [10, 0, 0, 2],
};

fn write_eth(buf: &mut [u8], dst: &MacAddr, src: &MacAddr, ethertype: u16) {
    buf[0..6].copy_from_slice(dst);
    buf[6..12].copy_from_slice(src);
    buf[12..14].copy_from_slice(&ethertype.to_be_bytes());
}

fn write_ipv4(buf: &mut [u8], src: &Ipv4Addr, dst: &Ipv4Addr, proto: u8, total_len: u16, ident: u16) {
    let ip = &mut buf[ETH_HEADER..ETH_HEADER + IPV4_HEADER];
    ip[0] = 0x45;
    ip[1] = 0;
    ip[2..4].copy_from_slice(&total_len.to_be_bytes());
    ip[4..6].copy_from_slice(&ident.to_be_bytes());
    ip[6..8].copy_from_slice(&[0x40, 0x00]);
    ip[8] = 64;
    ip[9] = proto;
    ip[10..12].fill(0);
    ip[12..16].copy_from_slice(src);
    ip[16..20].copy_from_slice(dst);
    let c = checksum16(ip);
    ip[10..12].copy_from_slice(&c.to_be_bytes());
}

fn check_len(frame_len: usize, min_headers: usize) -> usize {
    assert!(
        (MIN_FRAME..=MAX_FRAME).contains(&frame_len) && frame_len >= min_headers,
        "frame length {frame_len} outside {MIN_FRAME}..={MAX_FRAME}"
    );
    frame_len
}

/// ICMP echo request of exactly `frame_len` bytes (payload fills the rest).
pub fn icmp_echo_request(from: Endpoint, to: Endpoint, id: u16, seq: u16, frame_len: usize) -> Vec<u8> {
    let len = check_len(frame_len, ETH_HEADER + IPV4_HEADER + ICMP_HEADER);
    let mut f = vec![0u8; len];
    write_eth(&mut f, &to.mac, &from.mac, ETHERTYPE_IPV4);
    let ip_len = (len - ETH_HEADER) as u16;
    write_ipv4(&mut f, &from.ip, &to.ip, IPPROTO_ICMP, ip_len, seq);
    let icmp = &mut f[ETH_HEADER + IPV4_HEADER..];
    icmp[0] = ICMP_ECHO_REQUEST;
    icmp[1] = 0;
    icmp[4..6].copy_from_slice(&id.to_be_bytes());
    icmp[6..8].copy_from_slice(&seq.to_be_bytes());
    for (i, b) in icmp[ICMP_HEADER..].iter_mut().enumerate() {
        *b = (0x10 + i) as u8;
    }
    let c = checksum16(icmp);
    icmp[2..4].copy_from_slice(&c.to_be_bytes());
    f
}

/// UDP datagram padded to `frame_len` bytes.
pub fn udp_datagram(from: Endpoint, to: Endpoint, src_port: u16, dst_port: u16, frame_len: usize) -> Vec<u8> {
    let len = check_len(frame_len, ETH_HEADER + IPV4_HEADER + UDP_HEADER);
    let mut f = vec![0u8; len];
    write_eth(&mut f, &to.mac, &from.mac, ETHERTYPE_IPV4);
    let ip_len = (len - ETH_HEADER) as u16;
    write_ipv4(&mut f, &from.ip, &to.ip, IPPROTO_UDP, ip_len, 0);
    let udp = &mut f[ETH_HEADER + IPV4_HEADER..];
    let udp_len = udp.len() as u16;
    udp[0..2].copy_from_slice(&src_port.to_be_bytes());
    udp[2..4].copy_from_slice(&dst_port.to_be_bytes());
    udp[4..6].copy_from_slice(&udp_len.to_be_bytes());
    for (i, b) in udp[UDP_HEADER..].iter_mut().enumerate() {
        *b = i as u8;
    }
    f
}

/// Broadcast ARP who-has, padded to the minimum frame.
pub fn arp_request(from: Endpoint, target_ip: Ipv4Addr) -> Vec<u8> {
    let mut f = vec![0u8; MIN_FRAME];
    write_eth(&mut f, &[0xff; 6], &from.mac, ETHERTYPE_ARP);
    let arp = &mut f[ETH_HEADER..];
    arp[0..2].copy_from_slice(&1u16.to_be_bytes());
    arp[2..4].copy_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    arp[4] = 6;
    arp[5] = 4;
    arp[6..8].copy_from_slice(&1u16.to_be_bytes());
    arp[8..14].copy_from_slice(&from.mac);
    arp[14..18].copy_from_slice(&from.ip);
    arp[24..28].copy_from_slice(&target_ip);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IcmpInfo {
    pub icmp_type: u8,
    pub code: u8,
    pub checksum: u16,
    pub id: u16,
    pub seq: u16,
    /// Offset of the ICMP header within the frame.
    pub offset: usize,
    /// ICMP message length per the IP header.
    pub len: usize,
}

pub fn ethertype(frame: &[u8]) -> Option<u16> {
    frame.get(12..14).map(|b| u16::from_be_bytes([b[0], b[1]]))
}

/// Locates the ICMP message of an IPv4 frame.
pub fn parse_icmp(frame: &[u8]) -> Option<IcmpInfo> {
    if ethertype(frame)? != ETHERTYPE_IPV4 {
        return None;
    }
    let ip = frame.get(ETH_HEADER..)?;
    if ip.len() < IPV4_HEADER || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = (ip[0] & 0x0F) as usize * 4;
    let total = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    if ihl < IPV4_HEADER || total < ihl + ICMP_HEADER || total > ip.len() || ip[9] != IPPROTO_ICMP {
        return None;
    }
    let offset = ETH_HEADER + ihl;
    let icmp = &frame[offset..ETH_HEADER + total];
    Some(IcmpInfo {
        icmp_type: icmp[0],
        code: icmp[1],
        checksum: u16::from_be_bytes([icmp[2], icmp[3]]),
        id: u16::from_be_bytes([icmp[4], icmp[5]]),
        seq: u16::from_be_bytes([icmp[6], icmp[7]]),
        offset,
        len: total - ihl,
    })
}

/// Turns an echo request into its reply in place: swap MACs and IPs, set
/// type 0 and recompute the ICMP checksum. Returns false (leaving the frame
/// untouched) for anything that is not an ICMP echo request.
pub fn rewrite_echo_reply(frame: &mut [u8]) -> bool {
    let Some(info) = parse_icmp(frame) else {
        return false;
    };
    if info.icmp_type != ICMP_ECHO_REQUEST || info.code != 0 {
        return false;
    }
    let (dst, src) = frame[0..12].split_at_mut(6);
    dst.swap_with_slice(src);
    let ip = &mut frame[ETH_HEADER..ETH_HEADER + IPV4_HEADER];
    let (s, d) = ip[12..20].split_at_mut(4);
    s.swap_with_slice(d);
    let icmp = &mut frame[info.offset..info.offset + info.len];
    icmp[0] = ICMP_ECHO_REPLY;
    icmp[2..4].fill(0);
    let c = checksum16(icmp);
    icmp[2..4].copy_from_slice(&c.to_be_bytes());
    true
}

pub fn echo_reply(request: &[u8]) -> Option<Vec<u8>> {
    let mut f = request.to_vec();
    rewrite_echo_reply(&mut f).then_some(f)
}
