//! Byte-exact packet construction and parsing.

pub mod build;
pub mod checksum;
pub mod dns;
pub mod parse;

use std::fmt;
use std::net::IpAddr;

use crate::address::Family;

pub use build::{
    build_icmp_echo, build_ipv4_header, build_ipv6_header, build_tcp_syn, build_udp, IpEndpoints,
};
pub use checksum::internet_checksum;
pub use dns::{build_dns_query, build_dns_response};
pub use parse::{
    parse_frame, parse_reply, IcmpErrorKind, PacketView, Quoted, QuotedTransport, ReplyKind,
    Unreachable,
};

pub const ETHERNET_HEADER_LEN: usize = 14;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_IPV6: u16 = 0x86dd;
pub const ETHERTYPE_VLAN: u16 = 0x8100;

pub const PROTO_ICMP: u8 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;
pub const PROTO_ICMPV6: u8 = 58;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("payload of {0} bytes exceeds the 16-bit length field")]
    Oversize(usize),
    #[error("source and destination address families differ")]
    FamilyMismatch,
    #[error("malformed DNS name `{0}`")]
    MalformedName(String),
    #[error("truncated packet")]
    Truncated,
}

/// Link and network layer parameters shared by every probe of a scan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameTemplate {
    pub src_mac: [u8; 6],
    pub dst_mac: [u8; 6],
    pub src_addr: IpAddr,
    pub ttl: u8,
}

impl FrameTemplate {
    pub fn new(src_mac: [u8; 6], dst_mac: [u8; 6], src_addr: IpAddr, ttl: u8) -> Self {
        FrameTemplate {
            src_mac,
            dst_mac,
            src_addr,
            ttl,
        }
    }

    pub fn family(&self) -> Family {
        Family::of(self.src_addr)
    }
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);

    pub const fn from_bits(bits: u8) -> Self {
        TcpFlags(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;

    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TcpFlags({self})")
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [(u8, char); 6] = [
            (0x01, 'F'),
            (0x02, 'S'),
            (0x04, 'R'),
            (0x08, 'P'),
            (0x10, 'A'),
            (0x20, 'U'),
        ];
        for (bit, c) in NAMES {
            if self.0 & bit != 0 {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

/// Strips the Ethernet (and a single 802.1Q tag) header, returning the IP
/// packet inside when the ethertype is IPv4 or IPv6.
pub fn strip_ethernet(frame: &[u8]) -> Option<&[u8]> {
    let mut ethertype = u16::from_be_bytes([*frame.get(12)?, *frame.get(13)?]);
    let mut offset = ETHERNET_HEADER_LEN;
    if ethertype == ETHERTYPE_VLAN {
        ethertype = u16::from_be_bytes([*frame.get(16)?, *frame.get(17)?]);
        offset += 4;
    }
    match ethertype {
        ETHERTYPE_IPV4 | ETHERTYPE_IPV6 => frame.get(offset..),
        _ => None,
    }
}
