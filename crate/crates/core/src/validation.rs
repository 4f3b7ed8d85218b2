//! Stateless probe/reply matching.
//!
//! Every probe carries bits of a token computed as AES-128-CMAC over the
//! destination, destination port and probe type, keyed by a per-scan
//! secret. A reply is matched by recomputing the token from the reply
//! itself; nothing is remembered between send and receive.

use std::fmt;
use std::net::IpAddr;

use aes::Aes128;
use cmac::{Cmac, Mac};
use rand::{RngCore, SeedableRng};

use crate::address::ip_bits;
use crate::codecs::dns::{normalize_name, parse_dns, DnsMessage};
use crate::codecs::{PacketView, QuotedTransport, ReplyKind, TcpFlags};

/// First ephemeral source port handed out to probes.
pub const SPORT_BASE: u16 = 32768;
/// Number of source ports in the ephemeral range.
pub const SPORT_RANGE: u32 = 32768;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeType {
    IcmpEcho,
    TcpSyn,
    Udp,
    Dns,
}

impl ProbeType {
    pub fn name(self) -> &'static str {
        match self {
            ProbeType::IcmpEcho => "icmp_echo",
            ProbeType::TcpSyn => "tcp_syn",
            ProbeType::Udp => "udp",
            ProbeType::Dns => "dns",
        }
    }

    fn code(self) -> u8 {
        match self {
            ProbeType::IcmpEcho => 1,
            ProbeType::TcpSyn => 2,
            ProbeType::Udp => 3,
            ProbeType::Dns => 4,
        }
    }
}

impl fmt::Display for ProbeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-scan MAC key.
#[derive(Clone)]
pub struct ScanSecret {
    key: [u8; 16],
    mac: Cmac<Aes128>,
}

impl ScanSecret {
    pub fn from_bytes(key: [u8; 16]) -> Self {
        let mac = <Cmac<Aes128> as Mac>::new_from_slice(&key).expect("16-byte key");
        ScanSecret { key, mac }
    }

    /// Derives the key from the scan seed, so a rerun with the same seed
    /// validates (and builds) identically.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed ^ 0x7365_6372_6574_6b65);
        let mut key = [0u8; 16];
        rng.fill_bytes(&mut key);
        Self::from_bytes(key)
    }

    pub fn key(&self) -> &[u8; 16] {
        &self.key
    }
}

impl fmt::Debug for ScanSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScanSecret(..)")
    }
}

/// 64-bit validation value. Bit ranges are numbered MSB-first, so
/// `bits(0, 16)` is the most significant 16 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ValidationToken(pub u64);

impl ValidationToken {
    pub fn bits(self, from: u32, to: u32) -> u64 {
        let width = to - from;
        (self.0 >> (64 - to)) & ((1u64 << width) - 1)
    }

    /// Source port selected by this token.
    pub fn source_port(self) -> u16 {
        SPORT_BASE + (self.bits(32, 48) as u32 % SPORT_RANGE) as u16
    }
}

/// Canonical MAC input: family ∥ 16 address bytes ∥ port ∥ probe type.
pub fn derive_token(
    secret: &ScanSecret,
    dst: IpAddr,
    dst_port: u16,
    probe: ProbeType,
) -> ValidationToken {
    let mut msg = [0u8; 20];
    msg[0] = if dst.is_ipv4() { 4 } else { 6 };
    msg[1..17].copy_from_slice(&ip_bits(dst).to_be_bytes());
    msg[17..19].copy_from_slice(&dst_port.to_be_bytes());
    msg[19] = probe.code();
    let mut mac = secret.mac.clone();
    mac.update(&msg);
    let tag = mac.finalize().into_bytes();
    let mut first = [0u8; 8];
    first.copy_from_slice(&tag[..8]);
    ValidationToken(u64::from_be_bytes(first))
}

/// Protocol fields that carry a token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Embedded {
    Icmp { id: u16, seq: u16 },
    Tcp { sport: u16, seq: u32 },
    Udp { sport: u16, txid: u16 },
}

pub fn embed(token: ValidationToken, probe: ProbeType) -> Embedded {
    match probe {
        ProbeType::IcmpEcho => Embedded::Icmp {
            id: token.bits(0, 16) as u16,
            seq: token.bits(16, 32) as u16,
        },
        ProbeType::TcpSyn => Embedded::Tcp {
            sport: token.source_port(),
            seq: token.bits(0, 32) as u32,
        },
        ProbeType::Udp | ProbeType::Dns => Embedded::Udp {
            sport: token.source_port(),
            txid: token.bits(0, 16) as u16,
        },
    }
}

/// Static description of what replies to the running probe look like.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expectation {
    pub probe: ProbeType,
    /// Query name DNS replies must echo (lower case, no trailing dot).
    pub dns_qname: Option<String>,
}

impl Expectation {
    pub fn new(probe: ProbeType) -> Self {
        Expectation {
            probe,
            dns_qname: None,
        }
    }

    pub fn with_dns_qname(mut self, qname: &str) -> Self {
        self.dns_qname = Some(normalize_name(qname));
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    BadToken,
    Unparseable,
    ForeignPort,
    LateDuplicate,
}

impl RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectReason::BadToken => "bad_token",
            RejectReason::Unparseable => "unparseable",
            RejectReason::ForeignPort => "foreign_port",
            RejectReason::LateDuplicate => "late_duplicate",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A reply matched to the probe that caused it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Accepted {
    /// Destination of the original probe.
    pub target: IpAddr,
    /// Destination port of the original probe (0 for ICMP).
    pub port: u16,
    pub outcome: &'static str,
    /// Positive answer (echo reply, SYN-ACK, UDP or DNS reply) as opposed to
    /// a refusal or an ICMP error.
    pub success: bool,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept(Accepted),
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept(_))
    }
}

fn in_sport_range(port: u16) -> bool {
    (port as u32) >= SPORT_BASE as u32 && (port as u32) < SPORT_BASE as u32 + SPORT_RANGE
}

fn accept(target: IpAddr, port: u16, outcome: &'static str, success: bool) -> Verdict {
    Verdict::Accept(Accepted {
        target,
        port,
        outcome,
        success,
        detail: None,
    })
}

fn rcode_name(rcode: u8) -> String {
    match rcode {
        0 => "NOERROR".into(),
        1 => "FORMERR".into(),
        2 => "SERVFAIL".into(),
        3 => "NXDOMAIN".into(),
        4 => "NOTIMP".into(),
        5 => "REFUSED".into(),
        other => format!("RCODE{other}"),
    }
}

fn verify_dns(
    src: IpAddr,
    sport: u16,
    dport: u16,
    message: &DnsMessage,
    secret: &ScanSecret,
    expect: &Expectation,
) -> Verdict {
    if !in_sport_range(dport) {
        return Verdict::Reject(RejectReason::ForeignPort);
    }
    let token = derive_token(secret, src, sport, ProbeType::Dns);
    let Embedded::Udp { sport: expected_port, txid } = embed(token, ProbeType::Dns) else {
        unreachable!()
    };
    if dport != expected_port || message.id != txid || !message.is_response() {
        return Verdict::Reject(RejectReason::BadToken);
    }
    if let Some(qname) = &expect.dns_qname {
        match &message.question {
            Some(q) if &q.name == qname => {}
            _ => return Verdict::Reject(RejectReason::BadToken),
        }
    }
    Verdict::Accept(Accepted {
        target: src,
        port: sport,
        outcome: "dns",
        success: true,
        detail: Some(rcode_name(message.rcode())),
    })
}

/// Matches a classified reply against the scan secret. Uses only the reply
/// and the static probe description.
pub fn verify(reply: &PacketView<'_>, secret: &ScanSecret, expect: &Expectation) -> Verdict {
    use Verdict::Reject;
    let Some(ip) = reply.ip else {
        return Reject(RejectReason::Unparseable);
    };
    let probe = expect.probe;
    match &reply.kind {
        ReplyKind::Other => Reject(RejectReason::Unparseable),
        ReplyKind::IcmpEchoRequest { .. } => Reject(RejectReason::ForeignPort),
        ReplyKind::IcmpEchoReply { id, seq } => {
            if probe != ProbeType::IcmpEcho {
                return Reject(RejectReason::ForeignPort);
            }
            let token = derive_token(secret, ip.src, 0, probe);
            if embed(token, probe) == (Embedded::Icmp { id: *id, seq: *seq }) {
                accept(ip.src, 0, "echoreply", true)
            } else {
                Reject(RejectReason::BadToken)
            }
        }
        ReplyKind::Tcp {
            sport,
            dport,
            ack,
            flags,
            ..
        } => {
            if probe != ProbeType::TcpSyn || !in_sport_range(*dport) {
                return Reject(RejectReason::ForeignPort);
            }
            let token = derive_token(secret, ip.src, *sport, probe);
            let Embedded::Tcp { sport: ours, seq } = embed(token, probe) else {
                unreachable!()
            };
            if *dport != ours || *ack != seq.wrapping_add(1) {
                return Reject(RejectReason::BadToken);
            }
            let (outcome, success) = if flags.contains(TcpFlags::RST) {
                ("rst", false)
            } else if flags.contains(TcpFlags::SYN | TcpFlags::ACK) {
                ("synack", true)
            } else {
                ("tcp", false)
            };
            Verdict::Accept(Accepted {
                target: ip.src,
                port: *sport,
                outcome,
                success,
                detail: Some(flags.to_string()),
            })
        }
        ReplyKind::Dns {
            sport,
            dport,
            message,
        } => match probe {
            ProbeType::Dns => verify_dns(ip.src, *sport, *dport, message, secret, expect),
            ProbeType::Udp => verify_udp(ip.src, *sport, *dport, secret),
            _ => Reject(RejectReason::ForeignPort),
        },
        ReplyKind::Udp { sport, dport } => match probe {
            ProbeType::Udp => verify_udp(ip.src, *sport, *dport, secret),
            ProbeType::Dns => match parse_dns(reply.payload()) {
                Some(message) => verify_dns(ip.src, *sport, *dport, &message, secret, expect),
                None => Reject(RejectReason::Unparseable),
            },
            _ => Reject(RejectReason::ForeignPort),
        },
        ReplyKind::IcmpError { kind, quoted, .. } => {
            let Some(q) = quoted else {
                return Reject(RejectReason::Unparseable);
            };
            let matched = match (&q.transport, probe) {
                (QuotedTransport::IcmpEcho { id, seq }, ProbeType::IcmpEcho) => {
                    let token = derive_token(secret, q.dst, 0, probe);
                    Some((embed(token, probe) == Embedded::Icmp { id: *id, seq: *seq }, 0))
                }
                (QuotedTransport::Tcp { sport, dport, seq }, ProbeType::TcpSyn) => {
                    let token = derive_token(secret, q.dst, *dport, probe);
                    let ok = embed(token, probe) == Embedded::Tcp { sport: *sport, seq: *seq };
                    Some((ok, *dport))
                }
                (QuotedTransport::Udp { sport, dport, txid }, ProbeType::Udp | ProbeType::Dns) => {
                    let token = derive_token(secret, q.dst, *dport, probe);
                    let Embedded::Udp {
                        sport: ours,
                        txid: our_txid,
                    } = embed(token, probe)
                    else {
                        unreachable!()
                    };
                    let txid_ok = probe != ProbeType::Dns || txid.is_none_or(|t| t == our_txid);
                    Some((*sport == ours && txid_ok, *dport))
                }
                _ => None,
            };
            match matched {
                None => Reject(RejectReason::ForeignPort),
                Some((false, _)) => Reject(RejectReason::BadToken),
                Some((true, port)) => accept(q.dst, port, kind.outcome(), false),
            }
        }
    }
}

fn verify_udp(src: IpAddr, sport: u16, dport: u16, secret: &ScanSecret) -> Verdict {
    if !in_sport_range(dport) {
        return Verdict::Reject(RejectReason::ForeignPort);
    }
    let token = derive_token(secret, src, sport, ProbeType::Udp);
    if token.source_port() == dport {
        accept(src, sport, "udp", true)
    } else {
        Verdict::Reject(RejectReason::BadToken)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn secret() -> ScanSecret {
        ScanSecret::from_bytes(*b"0123456789abcdef")
    }

    #[test]
    fn tokens_are_deterministic() {
        let s = secret();
        let a: IpAddr = "2001:db8::1".parse().unwrap();
        assert_eq!(
            derive_token(&s, a, 80, ProbeType::TcpSyn),
            derive_token(&s, a, 80, ProbeType::TcpSyn)
        );
        let s2 = ScanSecret::from_seed(5);
        assert_eq!(s2.key(), ScanSecret::from_seed(5).key());
        assert_ne!(s2.key(), ScanSecret::from_seed(6).key());
    }

    #[test]
    fn single_bit_neighbours_get_distinct_tokens() {
        let s = secret();
        let mut seen = HashSet::new();
        for i in 0..4096u128 {
            let addr = crate::address::Family::V6.to_ip(0x2001_0db8_u128 << 96 | i);
            assert!(seen.insert(derive_token(&s, addr, 0, ProbeType::IcmpEcho)));
            for bit in 0..12 {
                let flipped = crate::address::Family::V6.to_ip((0x2001_0db8_u128 << 96 | i) ^ (1 << bit));
                assert_ne!(
                    derive_token(&s, addr, 0, ProbeType::IcmpEcho),
                    derive_token(&s, flipped, 0, ProbeType::IcmpEcho)
                );
            }
        }
    }

    #[test]
    fn probe_type_is_part_of_the_token() {
        let s = secret();
        let a: IpAddr = "192.0.2.1".parse().unwrap();
        let types = [ProbeType::IcmpEcho, ProbeType::TcpSyn, ProbeType::Udp, ProbeType::Dns];
        let tokens: HashSet<_> = types.iter().map(|&t| derive_token(&s, a, 53, t)).collect();
        assert_eq!(tokens.len(), 4);
    }

    #[test]
    fn embedding_slices_msb_first() {
        let t = ValidationToken(0x0123_4567_89ab_cdef);
        assert_eq!(embed(t, ProbeType::IcmpEcho), Embedded::Icmp { id: 0x0123, seq: 0x4567 });
        assert_eq!(
            embed(t, ProbeType::Dns),
            Embedded::Udp {
                sport: SPORT_BASE + (0x89ab % SPORT_RANGE) as u16,
                txid: 0x0123
            }
        );
        match embed(t, ProbeType::TcpSyn) {
            Embedded::Tcp { seq, sport } => {
                assert_eq!(seq, 0x0123_4567);
                // a SYN-ACK acknowledges seq + 1
                assert_eq!(seq.wrapping_add(1), 0x0123_4568);
                assert!(in_sport_range(sport));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn source_ports_stay_in_range() {
        for v in [0u64, u64::MAX, 0x0000_0000_ffff_0000, 0x0000_0000_7fff_0000] {
            let p = ValidationToken(v).source_port();
            assert!(in_sport_range(p), "{p}");
        }
    }
}
