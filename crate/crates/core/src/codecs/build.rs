//! Packet builders. Every `write_*` function appends to a caller-owned
//! buffer so the send path can reuse one allocation per thread.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::checksum::{fold, internet_checksum, ones_sum, pseudo_header_sum};
use super::{CodecError, FrameTemplate, TcpFlags};
use super::{ETHERTYPE_IPV4, ETHERTYPE_IPV6, PROTO_ICMP, PROTO_ICMPV6, PROTO_TCP, PROTO_UDP};

pub const IPV4_HEADER_LEN: usize = 20;
pub const IPV6_HEADER_LEN: usize = 40;
pub const TCP_HEADER_LEN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;
pub const ICMP_HEADER_LEN: usize = 8;

/// Identification field of every IPv4 probe.
pub const IPV4_IDENT: u16 = 54321;
/// Receive window advertised by SYN probes.
pub const SYN_WINDOW: u16 = 65535;

/// Source, destination and hop limit of one IP packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IpEndpoints {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub ttl: u8,
}

impl IpEndpoints {
    pub fn new(src: IpAddr, dst: IpAddr, ttl: u8) -> Result<Self, CodecError> {
        if src.is_ipv4() != dst.is_ipv4() {
            return Err(CodecError::FamilyMismatch);
        }
        Ok(IpEndpoints { src, dst, ttl })
    }

    fn reply_protocol_icmp(&self) -> u8 {
        if self.src.is_ipv4() {
            PROTO_ICMP
        } else {
            PROTO_ICMPV6
        }
    }
}

pub fn write_ethernet(buf: &mut Vec<u8>, dst_mac: [u8; 6], src_mac: [u8; 6], ethertype: u16) {
    buf.extend_from_slice(&dst_mac);
    buf.extend_from_slice(&src_mac);
    buf.extend_from_slice(&ethertype.to_be_bytes());
}

/// 20-byte IPv4 header with a valid header checksum.
pub fn build_ipv4_header(
    src: Ipv4Addr,
    dst: Ipv4Addr,
    protocol: u8,
    payload_len: usize,
    ttl: u8,
) -> Result<[u8; IPV4_HEADER_LEN], CodecError> {
    let total = payload_len + IPV4_HEADER_LEN;
    if total > u16::MAX as usize {
        return Err(CodecError::Oversize(payload_len));
    }
    let mut h = [0u8; IPV4_HEADER_LEN];
    h[0] = 0x45;
    h[2..4].copy_from_slice(&(total as u16).to_be_bytes());
    h[4..6].copy_from_slice(&IPV4_IDENT.to_be_bytes());
    h[8] = ttl;
    h[9] = protocol;
    h[12..16].copy_from_slice(&src.octets());
    h[16..20].copy_from_slice(&dst.octets());
    let c = internet_checksum(&h);
    h[10..12].copy_from_slice(&c.to_be_bytes());
    Ok(h)
}

/// 40-byte IPv6 header, traffic class and flow label zero.
pub fn build_ipv6_header(
    src: Ipv6Addr,
    dst: Ipv6Addr,
    next_header: u8,
    payload_len: usize,
    hop_limit: u8,
) -> Result<[u8; IPV6_HEADER_LEN], CodecError> {
    if payload_len > u16::MAX as usize {
        return Err(CodecError::Oversize(payload_len));
    }
    let mut h = [0u8; IPV6_HEADER_LEN];
    h[0] = 0x60;
    h[4..6].copy_from_slice(&(payload_len as u16).to_be_bytes());
    h[6] = next_header;
    h[7] = hop_limit;
    h[8..24].copy_from_slice(&src.octets());
    h[24..40].copy_from_slice(&dst.octets());
    Ok(h)
}

fn write_ip_header(
    buf: &mut Vec<u8>,
    ep: &IpEndpoints,
    protocol: u8,
    payload_len: usize,
) -> Result<(), CodecError> {
    match (ep.src, ep.dst) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            buf.extend_from_slice(&build_ipv4_header(s, d, protocol, payload_len, ep.ttl)?)
        }
        (IpAddr::V6(s), IpAddr::V6(d)) => {
            buf.extend_from_slice(&build_ipv6_header(s, d, protocol, payload_len, ep.ttl)?)
        }
        _ => return Err(CodecError::FamilyMismatch),
    }
    Ok(())
}

fn patch_checksum(buf: &mut [u8], at: usize, value: u16) {
    buf[at..at + 2].copy_from_slice(&value.to_be_bytes());
}

/// ICMP or ICMPv6 echo. `reply` selects type 0/129 instead of 8/128.
pub fn write_icmp_echo(
    buf: &mut Vec<u8>,
    ep: &IpEndpoints,
    reply: bool,
    id: u16,
    seq: u16,
    payload: &[u8],
) -> Result<(), CodecError> {
    let protocol = ep.reply_protocol_icmp();
    let len = ICMP_HEADER_LEN + payload.len();
    write_ip_header(buf, ep, protocol, len)?;
    let start = buf.len();
    let icmp_type = match (protocol, reply) {
        (PROTO_ICMP, false) => 8,
        (PROTO_ICMP, true) => 0,
        (_, false) => 128,
        (_, true) => 129,
    };
    buf.extend_from_slice(&[icmp_type, 0, 0, 0]);
    buf.extend_from_slice(&id.to_be_bytes());
    buf.extend_from_slice(&seq.to_be_bytes());
    buf.extend_from_slice(payload);
    finish_icmp(buf, ep, protocol, start);
    Ok(())
}

fn finish_icmp(buf: &mut [u8], ep: &IpEndpoints, protocol: u8, start: usize) {
    let seg = &buf[start..];
    let c = if protocol == PROTO_ICMP {
        internet_checksum(seg)
    } else {
        let acc = pseudo_header_sum(ep.src, ep.dst, PROTO_ICMPV6, seg.len() as u32);
        !fold(ones_sum(seg, acc))
    };
    patch_checksum(buf, start + 2, c);
}

/// ICMP error quoting (a prefix of) an offending packet. `rest` fills the
/// four bytes after the checksum (MTU for packet-too-big, pointer for
/// parameter problems, otherwise zero).
pub fn write_icmp_error(
    buf: &mut Vec<u8>,
    ep: &IpEndpoints,
    icmp_type: u8,
    code: u8,
    rest: u32,
    quoted: &[u8],
) -> Result<(), CodecError> {
    let protocol = ep.reply_protocol_icmp();
    let len = ICMP_HEADER_LEN + quoted.len();
    write_ip_header(buf, ep, protocol, len)?;
    let start = buf.len();
    buf.extend_from_slice(&[icmp_type, code, 0, 0]);
    buf.extend_from_slice(&rest.to_be_bytes());
    buf.extend_from_slice(quoted);
    finish_icmp(buf, ep, protocol, start);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn write_tcp(
    buf: &mut Vec<u8>,
    ep: &IpEndpoints,
    sport: u16,
    dport: u16,
    seq: u32,
    ack: u32,
    flags: TcpFlags,
    window: u16,
) -> Result<(), CodecError> {
    write_ip_header(buf, ep, PROTO_TCP, TCP_HEADER_LEN)?;
    let start = buf.len();
    buf.extend_from_slice(&sport.to_be_bytes());
    buf.extend_from_slice(&dport.to_be_bytes());
    buf.extend_from_slice(&seq.to_be_bytes());
    buf.extend_from_slice(&ack.to_be_bytes());
    // data offset 5 words, no options
    buf.push(5 << 4);
    buf.push(flags.bits());
    buf.extend_from_slice(&window.to_be_bytes());
    buf.extend_from_slice(&[0, 0, 0, 0]);
    let acc = pseudo_header_sum(ep.src, ep.dst, PROTO_TCP, TCP_HEADER_LEN as u32);
    let c = !fold(ones_sum(&buf[start..], acc));
    patch_checksum(buf, start + 16, c);
    Ok(())
}

/// UDP datagram. A computed checksum of zero is sent as `0xffff`.
pub fn write_udp(
    buf: &mut Vec<u8>,
    ep: &IpEndpoints,
    sport: u16,
    dport: u16,
    payload: &[u8],
) -> Result<(), CodecError> {
    let len = UDP_HEADER_LEN + payload.len();
    if len > u16::MAX as usize {
        return Err(CodecError::Oversize(len));
    }
    write_ip_header(buf, ep, PROTO_UDP, len)?;
    let start = buf.len();
    buf.extend_from_slice(&sport.to_be_bytes());
    buf.extend_from_slice(&dport.to_be_bytes());
    buf.extend_from_slice(&(len as u16).to_be_bytes());
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(payload);
    let acc = pseudo_header_sum(ep.src, ep.dst, PROTO_UDP, len as u32);
    let c = match !fold(ones_sum(&buf[start..], acc)) {
        0 => 0xffff,
        c => c,
    };
    patch_checksum(buf, start + 6, c);
    Ok(())
}

impl FrameTemplate {
    fn endpoints(&self, dst: IpAddr) -> Result<IpEndpoints, CodecError> {
        IpEndpoints::new(self.src_addr, dst, self.ttl)
    }

    fn begin(&self, buf: &mut Vec<u8>) {
        buf.clear();
        let ethertype = if self.src_addr.is_ipv4() {
            ETHERTYPE_IPV4
        } else {
            ETHERTYPE_IPV6
        };
        write_ethernet(buf, self.dst_mac, self.src_mac, ethertype);
    }

    /// Ethernet frame carrying an ICMP/ICMPv6 echo request.
    pub fn icmp_echo_into(
        &self,
        buf: &mut Vec<u8>,
        dst: IpAddr,
        id: u16,
        seq: u16,
        payload: &[u8],
    ) -> Result<(), CodecError> {
        let ep = self.endpoints(dst)?;
        self.begin(buf);
        write_icmp_echo(buf, &ep, false, id, seq, payload)
    }

    /// Ethernet frame carrying a bare TCP SYN.
    pub fn tcp_syn_into(
        &self,
        buf: &mut Vec<u8>,
        dst: IpAddr,
        sport: u16,
        dport: u16,
        seq: u32,
    ) -> Result<(), CodecError> {
        let ep = self.endpoints(dst)?;
        self.begin(buf);
        write_tcp(buf, &ep, sport, dport, seq, 0, TcpFlags::SYN, SYN_WINDOW)
    }

    pub fn udp_into(
        &self,
        buf: &mut Vec<u8>,
        dst: IpAddr,
        sport: u16,
        dport: u16,
        payload: &[u8],
    ) -> Result<(), CodecError> {
        let ep = self.endpoints(dst)?;
        self.begin(buf);
        write_udp(buf, &ep, sport, dport, payload)
    }
}

pub fn build_icmp_echo(
    template: &FrameTemplate,
    dst: IpAddr,
    id: u16,
    seq: u16,
    payload: &[u8],
) -> Result<Vec<u8>, CodecError> {
    let mut buf = Vec::with_capacity(64 + payload.len());
    template.icmp_echo_into(&mut buf, dst, id, seq, payload)?;
    Ok(buf)
}

pub fn build_tcp_syn(
    template: &FrameTemplate,
    dst: IpAddr,
    sport: u16,
    dport: u16,
    seq: u32,
) -> Result<Vec<u8>, CodecError> {
    let mut buf = Vec::with_capacity(80);
    template.tcp_syn_into(&mut buf, dst, sport, dport, seq)?;
    Ok(buf)
}

pub fn build_udp(
    template: &FrameTemplate,
    dst: IpAddr,
    sport: u16,
    dport: u16,
    payload: &[u8],
) -> Result<Vec<u8>, CodecError> {
    let mut buf = Vec::with_capacity(64 + payload.len());
    template.udp_into(&mut buf, dst, sport, dport, payload)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::super::checksum::transport_checksum;
    use super::super::ETHERNET_HEADER_LEN;
    use super::*;

    fn v6_template() -> FrameTemplate {
        FrameTemplate::new([2, 0, 0, 0, 0, 1], [2, 0, 0, 0, 0, 2], "2001:db8::1".parse().unwrap(), 64)
    }

    fn v4_template() -> FrameTemplate {
        FrameTemplate::new([2, 0, 0, 0, 0, 1], [2, 0, 0, 0, 0, 2], "192.0.2.1".parse().unwrap(), 64)
    }

    #[test]
    fn ipv6_header_fields() {
        let h = build_ipv6_header(
            "2001:db8::1".parse().unwrap(),
            "2001:db8::2".parse().unwrap(),
            58,
            8,
            64,
        )
        .unwrap();
        assert_eq!(&h[4..6], &[0x00, 0x08]);
        assert_eq!(h[6], 58);
        assert_eq!(h[7], 0x40);
        assert_eq!(h[0] >> 4, 6);
        assert!(build_ipv6_header(Ipv6Addr::LOCALHOST, Ipv6Addr::LOCALHOST, 17, 65536, 1).is_err());
    }

    #[test]
    fn ipv4_header_checksums_to_zero() {
        let h = build_ipv4_header(
            "192.0.2.1".parse().unwrap(),
            "198.51.100.7".parse().unwrap(),
            6,
            20,
            255,
        )
        .unwrap();
        assert_eq!(internet_checksum(&h), 0);
        assert_eq!(u16::from_be_bytes([h[2], h[3]]), 40);
        assert!(build_ipv4_header(Ipv4Addr::LOCALHOST, Ipv4Addr::LOCALHOST, 17, 65516, 1).is_err());
    }

    #[test]
    fn icmp_echo_fields_and_checksum() {
        let t = v6_template();
        let dst: IpAddr = "2001:db8::2".parse().unwrap();
        let f = build_icmp_echo(&t, dst, 0x1234, 0x0001, b"abc").unwrap();
        let icmp = &f[ETHERNET_HEADER_LEN + IPV6_HEADER_LEN..];
        assert_eq!(icmp[0], 128);
        assert_eq!(&icmp[4..8], &[0x12, 0x34, 0x00, 0x01]);
        assert_eq!(transport_checksum(t.src_addr, dst, PROTO_ICMPV6, icmp), 0);
        // any payload bit flip breaks the checksum
        for byte in 8..icmp.len() {
            for bit in 0..8 {
                let mut copy = icmp.to_vec();
                copy[byte] ^= 1 << bit;
                assert_ne!(transport_checksum(t.src_addr, dst, PROTO_ICMPV6, &copy), 0);
            }
        }
        let t4 = v4_template();
        let f = build_icmp_echo(&t4, "192.0.2.9".parse().unwrap(), 1, 2, &[]).unwrap();
        let icmp = &f[ETHERNET_HEADER_LEN + IPV4_HEADER_LEN..];
        assert_eq!(icmp[0], 8);
        assert_eq!(internet_checksum(icmp), 0);
    }

    #[test]
    fn tcp_syn_layout() {
        let t = v4_template();
        let dst: IpAddr = "198.51.100.7".parse().unwrap();
        let f = build_tcp_syn(&t, dst, 40000, 443, 0xdeadbeef).unwrap();
        let tcp = &f[ETHERNET_HEADER_LEN + IPV4_HEADER_LEN..];
        assert_eq!(tcp.len(), 20);
        assert_eq!(tcp[13], 0x02);
        assert_eq!(tcp[12] >> 4, 5);
        assert_eq!(&tcp[4..8], &0xdeadbeefu32.to_be_bytes());
        assert_eq!(transport_checksum(t.src_addr, dst, PROTO_TCP, tcp), 0);
    }

    #[test]
    fn udp_zero_checksum_is_sent_as_ffff() {
        let t = v6_template();
        let dst: IpAddr = "2001:db8::2".parse().unwrap();
        // Independent oracle: the checksum over a zeroed checksum field,
        // then choose a two-byte payload that makes the total sum 0xffff.
        let base = {
            let mut seg = vec![0u8; 10];
            seg[0..2].copy_from_slice(&1000u16.to_be_bytes());
            seg[2..4].copy_from_slice(&2000u16.to_be_bytes());
            seg[4..6].copy_from_slice(&10u16.to_be_bytes());
            fold(ones_sum(&seg, pseudo_header_sum(t.src_addr, dst, PROTO_UDP, 10)))
        };
        let filler = 0xffffu16.wrapping_sub(base);
        let filler = if filler == 0 { 0xffff } else { filler };
        let payload = filler.to_be_bytes();
        let f = build_udp(&t, dst, 1000, 2000, &payload).unwrap();
        let udp = &f[ETHERNET_HEADER_LEN + IPV6_HEADER_LEN..];
        assert_eq!(&udp[6..8], &[0xff, 0xff]);
        assert_eq!(transport_checksum(t.src_addr, dst, PROTO_UDP, udp), 0);
    }

    #[test]
    fn family_mismatch_is_rejected() {
        let t = v6_template();
        assert_eq!(
            build_tcp_syn(&t, "10.0.0.1".parse().unwrap(), 1, 2, 3),
            Err(CodecError::FamilyMismatch)
        );
    }
}
