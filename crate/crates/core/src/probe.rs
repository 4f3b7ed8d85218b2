//! Probe modules: how a (destination, port) pair becomes a frame, and which
//! replies count as answers.

use std::fmt;
use std::net::IpAddr;

use crate::address::Family;
use crate::codecs::dns::{build_dns_query, build_version_bind_query, QTYPE_A, QTYPE_AAAA};
use crate::codecs::{CodecError, FrameTemplate, PacketView, ETHERNET_HEADER_LEN};
use crate::validation::{
    derive_token, embed, verify, Embedded, Expectation, ProbeType, ScanSecret, Verdict,
};

/// Everything a module needs to build one probe.
#[derive(Clone, Copy, Debug)]
pub struct BuildCtx<'a> {
    pub template: &'a FrameTemplate,
    pub secret: &'a ScanSecret,
    /// Nanoseconds since scan start; only used by modules that stamp probes.
    pub now_ns: u64,
}

pub trait ProbeModule: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn probe_type(&self) -> ProbeType;
    /// Whether the destination port is meaningful (false for ICMP).
    fn uses_ports(&self) -> bool;
    /// Outcome classes this module can report.
    fn outcomes(&self) -> &'static [&'static str];
    /// Writes the Ethernet frame for `dst`/`dport` into `buf` (cleared first).
    fn build_into(
        &self,
        ctx: &BuildCtx<'_>,
        buf: &mut Vec<u8>,
        dst: IpAddr,
        dport: u16,
    ) -> Result<(), CodecError>;
    fn expectation(&self) -> Expectation {
        Expectation::new(self.probe_type())
    }
    fn validate(&self, reply: &PacketView<'_>, secret: &ScanSecret) -> Verdict {
        verify(reply, secret, &self.expectation())
    }
    /// Frame size on the wire excluding preamble/IFG/FCS, used for
    /// bandwidth-to-rate conversion.
    fn frame_len(&self, family: Family) -> usize;
    /// Send-to-receive time, when the reply carries enough to derive it.
    fn rtt_ns(&self, _reply: &PacketView<'_>, _now_ns: u64) -> Option<u64> {
        None
    }
}

fn ip_header_len(family: Family) -> usize {
    match family {
        Family::V4 => 20,
        Family::V6 => 40,
    }
}

const ERROR_OUTCOMES: [&str; 11] = [
    "unreach_net",
    "unreach_host",
    "unreach_proto",
    "unreach_port",
    "unreach_admin",
    "unreach",
    "timxceed",
    "toobig",
    "paramprob",
    "srcquench",
    "redirect",
];

macro_rules! outcomes {
    ($($extra:literal),*) => {{
        const ALL: &[&str] = &[
            $($extra,)*
            ERROR_OUTCOMES[0], ERROR_OUTCOMES[1], ERROR_OUTCOMES[2], ERROR_OUTCOMES[3],
            ERROR_OUTCOMES[4], ERROR_OUTCOMES[5], ERROR_OUTCOMES[6], ERROR_OUTCOMES[7],
            ERROR_OUTCOMES[8], ERROR_OUTCOMES[9], ERROR_OUTCOMES[10],
        ];
        ALL
    }};
}

/// ICMP/ICMPv6 echo request. With `timestamp` set the payload carries the
/// send time so replies yield an RTT.
#[derive(Clone, Debug, Default)]
pub struct IcmpEcho {
    pub timestamp: bool,
}

impl ProbeModule for IcmpEcho {
    fn name(&self) -> &'static str {
        "icmp_echo"
    }

    fn probe_type(&self) -> ProbeType {
        ProbeType::IcmpEcho
    }

    fn uses_ports(&self) -> bool {
        false
    }

    fn outcomes(&self) -> &'static [&'static str] {
        outcomes!("echoreply")
    }

    fn build_into(
        &self,
        ctx: &BuildCtx<'_>,
        buf: &mut Vec<u8>,
        dst: IpAddr,
        _dport: u16,
    ) -> Result<(), CodecError> {
        let token = derive_token(ctx.secret, dst, 0, ProbeType::IcmpEcho);
        let Embedded::Icmp { id, seq } = embed(token, ProbeType::IcmpEcho) else {
            unreachable!()
        };
        let stamp = ctx.now_ns.to_be_bytes();
        let payload: &[u8] = if self.timestamp { &stamp } else { &[] };
        ctx.template.icmp_echo_into(buf, dst, id, seq, payload)
    }

    fn frame_len(&self, family: Family) -> usize {
        let payload = if self.timestamp { 8 } else { 0 };
        ETHERNET_HEADER_LEN + ip_header_len(family) + 8 + payload
    }

    fn rtt_ns(&self, reply: &PacketView<'_>, now_ns: u64) -> Option<u64> {
        if !self.timestamp {
            return None;
        }
        let stamp: [u8; 8] = reply.payload().get(..8)?.try_into().ok()?;
        now_ns.checked_sub(u64::from_be_bytes(stamp))
    }
}

#[derive(Clone, Debug, Default)]
pub struct TcpSyn;

impl ProbeModule for TcpSyn {
    fn name(&self) -> &'static str {
        "tcp_syn"
    }

    fn probe_type(&self) -> ProbeType {
        ProbeType::TcpSyn
    }

    fn uses_ports(&self) -> bool {
        true
    }

    fn outcomes(&self) -> &'static [&'static str] {
        outcomes!("synack", "rst", "tcp")
    }

    fn build_into(
        &self,
        ctx: &BuildCtx<'_>,
        buf: &mut Vec<u8>,
        dst: IpAddr,
        dport: u16,
    ) -> Result<(), CodecError> {
        let token = derive_token(ctx.secret, dst, dport, ProbeType::TcpSyn);
        let Embedded::Tcp { sport, seq } = embed(token, ProbeType::TcpSyn) else {
            unreachable!()
        };
        ctx.template.tcp_syn_into(buf, dst, sport, dport, seq)
    }

    fn frame_len(&self, family: Family) -> usize {
        ETHERNET_HEADER_LEN + ip_header_len(family) + 20
    }
}

/// UDP datagram with a fixed payload. Any UDP answer to the probed port
/// counts; only the source port carries validation bits.
#[derive(Clone, Debug, Default)]
pub struct Udp {
    pub payload: Vec<u8>,
}

impl ProbeModule for Udp {
    fn name(&self) -> &'static str {
        "udp"
    }

    fn probe_type(&self) -> ProbeType {
        ProbeType::Udp
    }

    fn uses_ports(&self) -> bool {
        true
    }

    fn outcomes(&self) -> &'static [&'static str] {
        outcomes!("udp")
    }

    fn build_into(
        &self,
        ctx: &BuildCtx<'_>,
        buf: &mut Vec<u8>,
        dst: IpAddr,
        dport: u16,
    ) -> Result<(), CodecError> {
        let token = derive_token(ctx.secret, dst, dport, ProbeType::Udp);
        ctx.template
            .udp_into(buf, dst, token.source_port(), dport, &self.payload)
    }

    fn frame_len(&self, family: Family) -> usize {
        ETHERNET_HEADER_LEN + ip_header_len(family) + 8 + self.payload.len()
    }
}

/// DNS query over UDP. The encoded question is built once; each probe only
/// patches the transaction id.
#[derive(Clone, Debug)]
pub struct Dns {
    qname: String,
    query: Vec<u8>,
}

impl Dns {
    pub fn new(qname: &str, qtype: u16) -> Result<Self, CodecError> {
        Ok(Dns {
            qname: qname.to_string(),
            query: build_dns_query(qname, qtype, 0)?,
        })
    }

    /// Default question type for the family: A for IPv4, AAAA for IPv6.
    pub fn for_family(qname: &str, family: Family) -> Result<Self, CodecError> {
        let qtype = match family {
            Family::V4 => QTYPE_A,
            Family::V6 => QTYPE_AAAA,
        };
        Self::new(qname, qtype)
    }

    /// `version.bind` CHAOS TXT query.
    pub fn version_bind() -> Self {
        Dns {
            qname: "version.bind".into(),
            query: build_version_bind_query(0),
        }
    }

    pub fn qname(&self) -> &str {
        &self.qname
    }
}

impl ProbeModule for Dns {
    fn name(&self) -> &'static str {
        "dns"
    }

    fn probe_type(&self) -> ProbeType {
        ProbeType::Dns
    }

    fn uses_ports(&self) -> bool {
        true
    }

    fn outcomes(&self) -> &'static [&'static str] {
        outcomes!("dns")
    }

    fn build_into(
        &self,
        ctx: &BuildCtx<'_>,
        buf: &mut Vec<u8>,
        dst: IpAddr,
        dport: u16,
    ) -> Result<(), CodecError> {
        let token = derive_token(ctx.secret, dst, dport, ProbeType::Dns);
        let Embedded::Udp { sport, txid } = embed(token, ProbeType::Dns) else {
            unreachable!()
        };
        let mut query = [0u8; 512];
        let len = self.query.len();
        query[..len].copy_from_slice(&self.query);
        query[..2].copy_from_slice(&txid.to_be_bytes());
        ctx.template.udp_into(buf, dst, sport, dport, &query[..len])
    }

    fn expectation(&self) -> Expectation {
        Expectation::new(ProbeType::Dns).with_dns_qname(&self.qname)
    }

    fn frame_len(&self, family: Family) -> usize {
        ETHERNET_HEADER_LEN + ip_header_len(family) + 8 + self.query.len()
    }
}

pub const MODULE_NAMES: [&str; 4] = ["icmp_echo", "tcp_syn", "udp", "dns"];

/// Module options that come from the command line.
#[derive(Clone, Debug, Default)]
pub struct ProbeOptions {
    pub udp_payload: Vec<u8>,
    pub dns_qname: Option<String>,
    pub dns_qtype: Option<u16>,
    pub dns_version_bind: bool,
    pub icmp_timestamp: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("unknown probe module `{0}` (available: icmp_echo, tcp_syn, udp, dns)")]
    Unknown(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Looks a module up by name.
pub fn module_by_name(
    name: &str,
    family: Family,
    opts: &ProbeOptions,
) -> Result<Box<dyn ProbeModule>, ProbeError> {
    Ok(match name {
        "icmp_echo" | "icmp" | "icmp6_echo" => Box::new(IcmpEcho {
            timestamp: opts.icmp_timestamp,
        }),
        "tcp_syn" | "tcp" => Box::new(TcpSyn),
        "udp" => Box::new(Udp {
            payload: opts.udp_payload.clone(),
        }),
        "dns" if opts.dns_version_bind => Box::new(Dns::version_bind()),
        "dns" => {
            let qname = opts.dns_qname.as_deref().unwrap_or("example.com");
            match opts.dns_qtype {
                Some(qtype) => Box::new(Dns::new(qname, qtype)?),
                None => Box::new(Dns::for_family(qname, family)?),
            }
        }
        other => return Err(ProbeError::Unknown(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::dns::parse_dns;
    use crate::codecs::{parse_frame, ReplyKind};

    fn ctx_parts() -> (FrameTemplate, ScanSecret) {
        (
            FrameTemplate::new([2, 0, 0, 0, 0, 1], [2, 0, 0, 0, 0, 2], "2001:db8::1".parse().unwrap(), 64),
            ScanSecret::from_bytes([7; 16]),
        )
    }

    #[test]
    fn built_frames_match_declared_length() {
        let (template, secret) = ctx_parts();
        let ctx = BuildCtx {
            template: &template,
            secret: &secret,
            now_ns: 0,
        };
        let dst: IpAddr = "2001:db8::99".parse().unwrap();
        for name in MODULE_NAMES {
            let m = module_by_name(name, Family::V6, &ProbeOptions::default()).unwrap();
            let mut buf = Vec::new();
            m.build_into(&ctx, &mut buf, dst, 53).unwrap();
            assert_eq!(buf.len(), m.frame_len(Family::V6), "{name}");
        }
    }

    #[test]
    fn dns_probe_patches_txid() {
        let (template, secret) = ctx_parts();
        let ctx = BuildCtx {
            template: &template,
            secret: &secret,
            now_ns: 0,
        };
        let m = Dns::for_family("example.com", Family::V6).unwrap();
        let dst: IpAddr = "2001:db8::53".parse().unwrap();
        let mut buf = Vec::new();
        m.build_into(&ctx, &mut buf, dst, 53).unwrap();
        let view = parse_frame(&buf);
        assert!(parse_dns(view.payload()).is_some());
        let token = derive_token(&secret, dst, 53, ProbeType::Dns);
        match view.kind {
            ReplyKind::Dns { message, .. } => {
                assert_eq!(message.id as u64, token.bits(0, 16));
                assert_eq!(message.question.unwrap().qtype, QTYPE_AAAA);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_module() {
        let err = module_by_name("smtp", Family::V4, &ProbeOptions::default()).unwrap_err();
        assert!(err.to_string().contains("tcp_syn"));
    }
}
