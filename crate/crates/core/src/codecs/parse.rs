//! Structural reply parsing. Total over arbitrary input: anything that is
//! truncated, fragmented, or not understood classifies as
//! [`ReplyKind::Other`].

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::ops::Range;

use super::dns::{parse_dns, DnsMessage};
use super::{strip_ethernet, TcpFlags, PROTO_ICMP, PROTO_ICMPV6, PROTO_TCP, PROTO_UDP};
use crate::address::Family;

const MAX_EXTENSION_HEADERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Unreachable {
    Network,
    Host,
    Protocol,
    Port,
    Prohibited,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IcmpErrorKind {
    Unreachable(Unreachable),
    TimeExceeded,
    PacketTooBig,
    ParameterProblem,
    SourceQuench,
    Redirect,
}

impl IcmpErrorKind {
    fn classify(family: Family, icmp_type: u8, code: u8) -> Option<Self> {
        use IcmpErrorKind::*;
        Some(match (family, icmp_type) {
            (Family::V4, 3) => Unreachable(match code {
                0 | 6 | 11 => self::Unreachable::Network,
                1 | 7 | 12 => self::Unreachable::Host,
                2 => self::Unreachable::Protocol,
                3 => self::Unreachable::Port,
                9 | 10 | 13 => self::Unreachable::Prohibited,
                _ => self::Unreachable::Other,
            }),
            (Family::V4, 4) => SourceQuench,
            (Family::V4, 5) => Redirect,
            (Family::V4, 11) => TimeExceeded,
            (Family::V4, 12) => ParameterProblem,
            (Family::V6, 1) => Unreachable(match code {
                0 => self::Unreachable::Network,
                3 => self::Unreachable::Host,
                4 => self::Unreachable::Port,
                1 | 5 | 6 => self::Unreachable::Prohibited,
                _ => self::Unreachable::Other,
            }),
            (Family::V6, 2) => PacketTooBig,
            (Family::V6, 3) => TimeExceeded,
            (Family::V6, 4) => ParameterProblem,
            _ => return None,
        })
    }

    /// Stable outcome name used in result rows.
    pub fn outcome(self) -> &'static str {
        match self {
            IcmpErrorKind::Unreachable(u) => match u {
                Unreachable::Network => "unreach_net",
                Unreachable::Host => "unreach_host",
                Unreachable::Protocol => "unreach_proto",
                Unreachable::Port => "unreach_port",
                Unreachable::Prohibited => "unreach_admin",
                Unreachable::Other => "unreach",
            },
            IcmpErrorKind::TimeExceeded => "timxceed",
            IcmpErrorKind::PacketTooBig => "toobig",
            IcmpErrorKind::ParameterProblem => "paramprob",
            IcmpErrorKind::SourceQuench => "srcquench",
            IcmpErrorKind::Redirect => "redirect",
        }
    }
}

/// Transport header fields recovered from a packet quoted in an ICMP error.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QuotedTransport {
    IcmpEcho { id: u16, seq: u16 },
    Tcp { sport: u16, dport: u16, seq: u32 },
    Udp { sport: u16, dport: u16, txid: Option<u16> },
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quoted {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub protocol: u8,
    pub transport: QuotedTransport,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplyKind {
    IcmpEchoRequest { id: u16, seq: u16 },
    IcmpEchoReply { id: u16, seq: u16 },
    IcmpError {
        kind: IcmpErrorKind,
        code: u8,
        quoted: Option<Quoted>,
    },
    Tcp {
        sport: u16,
        dport: u16,
        seq: u32,
        ack: u32,
        flags: TcpFlags,
        window: u16,
    },
    Udp { sport: u16, dport: u16 },
    Dns {
        sport: u16,
        dport: u16,
        message: DnsMessage,
    },
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IpInfo {
    pub family: Family,
    pub src: IpAddr,
    pub dst: IpAddr,
    pub ttl: u8,
    pub protocol: u8,
}

/// A classified packet plus the offsets of its layers within `raw`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketView<'a> {
    raw: &'a [u8],
    pub ip: Option<IpInfo>,
    pub l3: usize,
    pub l4: Option<usize>,
    pub payload: Option<Range<usize>>,
    pub kind: ReplyKind,
}

impl<'a> PacketView<'a> {
    fn other(raw: &'a [u8], l3: usize) -> Self {
        PacketView {
            raw,
            ip: None,
            l3,
            l4: None,
            payload: None,
            kind: ReplyKind::Other,
        }
    }

    pub fn raw(&self) -> &'a [u8] {
        self.raw
    }

    pub fn src(&self) -> Option<IpAddr> {
        self.ip.map(|i| i.src)
    }

    pub fn dst(&self) -> Option<IpAddr> {
        self.ip.map(|i| i.dst)
    }

    pub fn ttl(&self) -> Option<u8> {
        self.ip.map(|i| i.ttl)
    }

    /// Application payload (bytes after the transport header), if any.
    pub fn payload(&self) -> &'a [u8] {
        match &self.payload {
            Some(r) => &self.raw[r.clone()],
            None => &[],
        }
    }

    pub fn is_other(&self) -> bool {
        matches!(self.kind, ReplyKind::Other)
    }
}

fn be16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*b.get(at)?, *b.get(at + 1)?]))
}

fn be32(b: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_be_bytes([
        *b.get(at)?,
        *b.get(at + 1)?,
        *b.get(at + 2)?,
        *b.get(at + 3)?,
    ]))
}

struct L3 {
    info: IpInfo,
    l4: usize,
    end: usize,
}

/// Parses the network header. `strict` requires the declared length to be
/// present; quoted packets are allowed to be cut short.
fn parse_l3(b: &[u8], strict: bool) -> Option<L3> {
    match b.first()? >> 4 {
        4 => {
            let ihl = (*b.first()? & 0x0f) as usize * 4;
            if ihl < 20 || b.len() < ihl {
                return None;
            }
            let total = be16(b, 2)? as usize;
            if total < ihl || (strict && total > b.len()) {
                return None;
            }
            let frag = be16(b, 6)?;
            // more-fragments or non-zero offset
            if frag & 0x3fff != 0 {
                return None;
            }
            let src = Ipv4Addr::new(b[12], b[13], b[14], b[15]);
            let dst = Ipv4Addr::new(b[16], b[17], b[18], b[19]);
            Some(L3 {
                info: IpInfo {
                    family: Family::V4,
                    src: src.into(),
                    dst: dst.into(),
                    ttl: b[8],
                    protocol: b[9],
                },
                l4: ihl,
                end: total.min(b.len()),
            })
        }
        6 => {
            if b.len() < 40 {
                return None;
            }
            let payload_len = be16(b, 4)? as usize;
            if strict && 40 + payload_len > b.len() {
                return None;
            }
            let end = (40 + payload_len).min(b.len());
            let mut next = b[6];
            let mut offset = 40;
            let mut hops = 0;
            loop {
                match next {
                    0 | 43 | 60 => {
                        let len = (*b.get(offset + 1)? as usize + 1) * 8;
                        next = *b.get(offset)?;
                        offset += len;
                    }
                    44 => {
                        let frag = be16(b, offset + 2)?;
                        if frag & 0xfff9 != 0 {
                            return None;
                        }
                        next = *b.get(offset)?;
                        offset += 8;
                    }
                    51 => {
                        let len = (*b.get(offset + 1)? as usize + 2) * 4;
                        next = *b.get(offset)?;
                        offset += len;
                    }
                    _ => break,
                }
                hops += 1;
                if hops > MAX_EXTENSION_HEADERS || offset > end {
                    return None;
                }
            }
            let mut src = [0u8; 16];
            let mut dst = [0u8; 16];
            src.copy_from_slice(&b[8..24]);
            dst.copy_from_slice(&b[24..40]);
            Some(L3 {
                info: IpInfo {
                    family: Family::V6,
                    src: Ipv6Addr::from(src).into(),
                    dst: Ipv6Addr::from(dst).into(),
                    ttl: b[7],
                    protocol: next,
                },
                l4: offset,
                end,
            })
        }
        _ => None,
    }
}

fn parse_quoted(inner: &[u8]) -> Option<Quoted> {
    let l3 = parse_l3(inner, false)?;
    let t = &inner[l3.l4..l3.end];
    let transport = match (l3.info.family, l3.info.protocol) {
        (Family::V4, PROTO_ICMP) if t.first() == Some(&8) => QuotedTransport::IcmpEcho {
            id: be16(t, 4)?,
            seq: be16(t, 6)?,
        },
        (Family::V6, PROTO_ICMPV6) if t.first() == Some(&128) => QuotedTransport::IcmpEcho {
            id: be16(t, 4)?,
            seq: be16(t, 6)?,
        },
        (_, PROTO_TCP) => QuotedTransport::Tcp {
            sport: be16(t, 0)?,
            dport: be16(t, 2)?,
            seq: be32(t, 4)?,
        },
        (_, PROTO_UDP) => QuotedTransport::Udp {
            sport: be16(t, 0)?,
            dport: be16(t, 2)?,
            txid: be16(t, 8),
        },
        _ => QuotedTransport::Unknown,
    };
    Some(Quoted {
        src: l3.info.src,
        dst: l3.info.dst,
        protocol: l3.info.protocol,
        transport,
    })
}

/// Classifies an IP-layer packet (no link header).
pub fn parse_reply(raw: &[u8]) -> PacketView<'_> {
    parse_at(raw, 0)
}

/// Classifies an Ethernet frame.
pub fn parse_frame(frame: &[u8]) -> PacketView<'_> {
    match strip_ethernet(frame) {
        Some(ip) => parse_at(frame, frame.len() - ip.len()),
        None => PacketView::other(frame, 0),
    }
}

fn parse_at(raw: &[u8], l3_off: usize) -> PacketView<'_> {
    let b = &raw[l3_off..];
    let Some(l3) = parse_l3(b, true) else {
        return PacketView::other(raw, l3_off);
    };
    let seg = &b[l3.l4..l3.end];
    let l4 = l3_off + l3.l4;
    let end = l3_off + l3.end;
    let classified = match (l3.info.family, l3.info.protocol) {
        (family @ Family::V4, PROTO_ICMP) | (family @ Family::V6, PROTO_ICMPV6) => {
            classify_icmp(family, seg).map(|k| (k, l4 + 8..end))
        }
        (_, PROTO_TCP) => classify_tcp(seg).map(|(k, hl)| (k, l4 + hl..end)),
        (_, PROTO_UDP) => classify_udp(seg).map(|k| (k, l4 + 8..end)),
        _ => None,
    };
    match classified {
        Some((kind, payload)) => PacketView {
            raw,
            ip: Some(l3.info),
            l3: l3_off,
            l4: Some(l4),
            payload: Some(payload),
            kind,
        },
        None => PacketView {
            ip: Some(l3.info),
            ..PacketView::other(raw, l3_off)
        },
    }
}

fn classify_icmp(family: Family, seg: &[u8]) -> Option<ReplyKind> {
    if seg.len() < 8 {
        return None;
    }
    let (icmp_type, code) = (seg[0], seg[1]);
    let (request, reply) = match family {
        Family::V4 => (8, 0),
        Family::V6 => (128, 129),
    };
    if icmp_type == request || icmp_type == reply {
        let id = be16(seg, 4)?;
        let seq = be16(seg, 6)?;
        return Some(if icmp_type == reply {
            ReplyKind::IcmpEchoReply { id, seq }
        } else {
            ReplyKind::IcmpEchoRequest { id, seq }
        });
    }
    let kind = IcmpErrorKind::classify(family, icmp_type, code)?;
    Some(ReplyKind::IcmpError {
        kind,
        code,
        quoted: parse_quoted(&seg[8..]),
    })
}

fn classify_tcp(seg: &[u8]) -> Option<(ReplyKind, usize)> {
    if seg.len() < 20 {
        return None;
    }
    let header_len = (seg[12] >> 4) as usize * 4;
    if header_len < 20 || header_len > seg.len() {
        return None;
    }
    Some((
        ReplyKind::Tcp {
            sport: be16(seg, 0)?,
            dport: be16(seg, 2)?,
            seq: be32(seg, 4)?,
            ack: be32(seg, 8)?,
            flags: TcpFlags::from_bits(seg[13]),
            window: be16(seg, 14)?,
        },
        header_len,
    ))
}

fn classify_udp(seg: &[u8]) -> Option<ReplyKind> {
    if seg.len() < 8 {
        return None;
    }
    let sport = be16(seg, 0)?;
    let dport = be16(seg, 2)?;
    let len = be16(seg, 4)? as usize;
    if len < 8 || len > seg.len() {
        return None;
    }
    let payload = &seg[8..len];
    if sport == 53 || dport == 53 {
        if let Some(message) = parse_dns(payload) {
            return Some(ReplyKind::Dns {
                sport,
                dport,
                message,
            });
        }
    }
    Some(ReplyKind::Udp { sport, dport })
}

#[cfg(test)]
mod tests {
    use super::super::build::{write_icmp_echo, write_icmp_error, write_tcp, IpEndpoints};
    use super::*;
    use rand::{Rng, SeedableRng};

    fn ep(src: &str, dst: &str) -> IpEndpoints {
        IpEndpoints::new(src.parse().unwrap(), dst.parse().unwrap(), 64).unwrap()
    }

    #[test]
    fn syn_ack_is_tcp_with_flags() {
        let mut buf = Vec::new();
        write_tcp(
            &mut buf,
            &ep("198.51.100.7", "192.0.2.1"),
            443,
            40000,
            5,
            6,
            TcpFlags::SYN | TcpFlags::ACK,
            1024,
        )
        .unwrap();
        let v = parse_reply(&buf);
        match v.kind {
            ReplyKind::Tcp { flags, ack, .. } => {
                assert!(flags.contains(TcpFlags::SYN) && flags.contains(TcpFlags::ACK));
                assert_eq!(flags.to_string(), "SA");
                assert_eq!(ack, 6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn icmpv6_echo_reply() {
        let mut buf = Vec::new();
        write_icmp_echo(&mut buf, &ep("2001:db8::2", "2001:db8::1"), true, 9, 10, b"x").unwrap();
        let v = parse_reply(&buf);
        assert_eq!(v.kind, ReplyKind::IcmpEchoReply { id: 9, seq: 10 });
        assert_eq!(v.payload(), b"x");
    }

    #[test]
    fn icmp_error_quotes_inner_probe() {
        let mut probe = Vec::new();
        write_tcp(
            &mut probe,
            &ep("192.0.2.1", "198.51.100.7"),
            40000,
            80,
            0xabcdef01,
            0,
            TcpFlags::SYN,
            65535,
        )
        .unwrap();
        let mut err = Vec::new();
        write_icmp_error(&mut err, &ep("203.0.113.1", "192.0.2.1"), 3, 13, 0, &probe[..28]).unwrap();
        let v = parse_reply(&err);
        match v.kind {
            ReplyKind::IcmpError { kind, quoted, .. } => {
                assert_eq!(kind.outcome(), "unreach_admin");
                let q = quoted.unwrap();
                assert_eq!(q.dst, "198.51.100.7".parse::<IpAddr>().unwrap());
                assert_eq!(
                    q.transport,
                    QuotedTransport::Tcp {
                        sport: 40000,
                        dport: 80,
                        seq: 0xabcdef01
                    }
                );
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn extension_headers_are_skipped() {
        let mut buf = Vec::new();
        write_icmp_echo(&mut buf, &ep("2001:db8::2", "2001:db8::1"), true, 1, 2, &[]).unwrap();
        // splice in a hop-by-hop header (8 bytes) carrying the original next header
        let mut spliced = buf[..40].to_vec();
        spliced[6] = 0;
        let plen = u16::from_be_bytes([spliced[4], spliced[5]]) + 8;
        spliced[4..6].copy_from_slice(&plen.to_be_bytes());
        spliced.extend_from_slice(&[58, 0, 1, 4, 0, 0, 0, 0]);
        spliced.extend_from_slice(&buf[40..]);
        assert_eq!(parse_reply(&spliced).kind, ReplyKind::IcmpEchoReply { id: 1, seq: 2 });

        // five chained headers exceed the bound
        let mut deep = buf[..40].to_vec();
        deep[6] = 60;
        let plen = u16::from_be_bytes([deep[4], deep[5]]) + 40;
        deep[4..6].copy_from_slice(&plen.to_be_bytes());
        for i in 0..5 {
            let next = if i == 4 { 58 } else { 60 };
            deep.extend_from_slice(&[next, 0, 1, 4, 0, 0, 0, 0]);
        }
        deep.extend_from_slice(&buf[40..]);
        assert!(parse_reply(&deep).is_other());
    }

    #[test]
    fn truncation_is_other() {
        let mut buf = Vec::new();
        write_icmp_echo(&mut buf, &ep("192.0.2.2", "192.0.2.1"), true, 1, 2, b"abcd").unwrap();
        for cut in 0..buf.len() {
            assert!(parse_reply(&buf[..cut]).is_other(), "cut at {cut}");
        }
        assert!(!parse_reply(&buf).is_other());
    }

    #[test]
    fn random_noise_is_other_and_stable() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let mut noise = [0u8; 40];
            rng.fill(&mut noise[..]);
            // avoid accidental valid version nibbles dominating the sample
            let first = parse_reply(&noise);
            let second = parse_reply(&noise);
            assert_eq!(first, second);
            if noise[0] >> 4 != 4 && noise[0] >> 4 != 6 {
                assert!(first.is_other());
            }
        }
    }

    #[test]
    fn fragments_are_other() {
        let mut buf = Vec::new();
        write_icmp_echo(&mut buf, &ep("192.0.2.2", "192.0.2.1"), true, 1, 2, &[]).unwrap();
        buf[6] = 0x20; // MF
        assert!(parse_reply(&buf).is_other());
    }
}
