//! In-process virtual network.
//!
//! [`SimNet`] implements [`Transport`]: every sent frame is logged, matched
//! against responder rules, and answered with a well-formed reply that
//! becomes receivable once the (usually simulated) clock passes its due
//! time. Loss and latency draws are keyed hashes of the probe, so a run is
//! reproducible regardless of thread interleaving.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::io;
use std::net::IpAddr;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::address::{ip_bits, low_mask, parse_ports, Family, TargetSpec};
use crate::clock::Clock;
use crate::codecs::build::{write_icmp_echo, write_icmp_error, write_tcp, write_udp, IpEndpoints};
use crate::codecs::dns::{build_dns_query, build_dns_response, parse_dns, QTYPE_A, QTYPE_AAAA};
use crate::codecs::{parse_frame, strip_ethernet, ReplyKind, TcpFlags, Unreachable};
use crate::keyed::sip128;
use crate::transport::Transport;
use crate::validation::{ProbeType, SPORT_BASE, SPORT_RANGE};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("rule line {line}: {message}")]
pub struct RuleError {
    pub line: usize,
    pub message: String,
}

/// Which destination addresses a rule applies to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AddrMatch {
    Any,
    Prefix { family: Family, bits: u128, len: u32 },
    /// `addr & mask == value` on right-aligned address bits.
    LowBits { mask: u128, value: u128 },
    Set(HashSet<IpAddr>),
}

impl AddrMatch {
    pub fn matches(&self, addr: IpAddr) -> bool {
        let bits = ip_bits(addr);
        match self {
            AddrMatch::Any => true,
            AddrMatch::Prefix { family, bits: p, len } => {
                if Family::of(addr) != *family {
                    return false;
                }
                let shift = family.width() - len;
                *len == 0 || (bits >> shift) == (p >> shift)
            }
            AddrMatch::LowBits { mask, value } => bits & mask == *value,
            AddrMatch::Set(set) => set.contains(&addr),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimIcmpError {
    Unreachable(Unreachable),
    TimeExceeded,
    PacketTooBig,
}

impl SimIcmpError {
    fn type_code(self, family: Family) -> (u8, u8) {
        use Unreachable::*;
        match (family, self) {
            (Family::V4, SimIcmpError::Unreachable(u)) => (
                3,
                match u {
                    Network => 0,
                    Host => 1,
                    Protocol => 2,
                    Port => 3,
                    Prohibited => 13,
                    Other => 15,
                },
            ),
            (Family::V4, SimIcmpError::TimeExceeded) => (11, 0),
            // IPv4 has no packet-too-big; fragmentation needed is the analogue
            (Family::V4, SimIcmpError::PacketTooBig) => (3, 4),
            (Family::V6, SimIcmpError::Unreachable(u)) => (
                1,
                match u {
                    Network => 0,
                    Host => 3,
                    Port => 4,
                    Prohibited => 1,
                    Protocol | Other => 7,
                },
            ),
            (Family::V6, SimIcmpError::TimeExceeded) => (3, 0),
            (Family::V6, SimIcmpError::PacketTooBig) => (2, 0),
        }
    }

    fn parse(name: &str) -> Option<Self> {
        use Unreachable::*;
        Some(match name {
            "unreach_net" => SimIcmpError::Unreachable(Network),
            "unreach_host" => SimIcmpError::Unreachable(Host),
            "unreach_proto" => SimIcmpError::Unreachable(Protocol),
            "unreach_port" => SimIcmpError::Unreachable(Port),
            "unreach_admin" => SimIcmpError::Unreachable(Prohibited),
            "unreach" => SimIcmpError::Unreachable(Other),
            "timxceed" => SimIcmpError::TimeExceeded,
            "toobig" => SimIcmpError::PacketTooBig,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Behavior {
    EchoReply,
    SynAck,
    Rst,
    /// Any UDP answer, echoing the probe payload.
    UdpReply,
    DnsAnswer { rcode: u8, records: Vec<IpAddr> },
    /// Error quoting the probe, sent by `from` (the target itself if unset).
    IcmpError { error: SimIcmpError, from: Option<IpAddr> },
    Silent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Latency {
    Fixed(Duration),
    Uniform(Duration, Duration),
}

/// One line of responder configuration; the first matching rule wins.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponderRule {
    pub addrs: AddrMatch,
    /// `None` matches any port.
    pub ports: Option<Vec<u16>>,
    pub probes: Option<Vec<ProbeType>>,
    pub behavior: Behavior,
    pub latency: Latency,
    pub loss: f64,
}

impl ResponderRule {
    pub fn new(addrs: AddrMatch, behavior: Behavior) -> Self {
        ResponderRule {
            addrs,
            ports: None,
            probes: None,
            behavior,
            latency: Latency::Fixed(Duration::from_millis(1)),
            loss: 0.0,
        }
    }

    pub fn ports(mut self, ports: Vec<u16>) -> Self {
        self.ports = Some(ports);
        self
    }

    pub fn probes(mut self, probes: Vec<ProbeType>) -> Self {
        self.probes = Some(probes);
        self
    }

    pub fn latency(mut self, latency: Latency) -> Self {
        self.latency = latency;
        self
    }

    pub fn loss(mut self, loss: f64) -> Self {
        self.loss = loss.clamp(0.0, 1.0);
        self
    }

    fn matches(&self, dst: IpAddr, dport: u16, probe: ProbeType) -> bool {
        self.probes.as_ref().is_none_or(|p| p.contains(&probe))
            && (probe == ProbeType::IcmpEcho || self.ports.as_ref().is_none_or(|p| p.contains(&dport)))
            && self.addrs.matches(dst)
    }
}

fn probe_from_name(name: &str) -> Option<ProbeType> {
    Some(match name {
        "icmp_echo" | "icmp" => ProbeType::IcmpEcho,
        "tcp_syn" | "tcp" => ProbeType::TcpSyn,
        "udp" => ProbeType::Udp,
        "dns" => ProbeType::Dns,
        _ => return None,
    })
}

fn parse_latency(text: &str) -> Option<Latency> {
    let ms = |t: &str| -> Option<Duration> {
        let t = t.trim().trim_end_matches("ms");
        let v: f64 = t.parse().ok()?;
        (v >= 0.0 && v.is_finite()).then(|| Duration::from_secs_f64(v / 1000.0))
    };
    match text.split_once('-') {
        Some((lo, hi)) => {
            let (lo, hi) = (ms(lo)?, ms(hi)?);
            (lo <= hi).then_some(Latency::Uniform(lo, hi))
        }
        None => ms(text).map(Latency::Fixed),
    }
}

fn parse_behavior(text: &str) -> Option<Behavior> {
    let (name, args) = match text.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (text, None),
    };
    Some(match (name, args) {
        ("echo_reply", None) => Behavior::EchoReply,
        ("syn_ack", None) => Behavior::SynAck,
        ("rst", None) => Behavior::Rst,
        ("udp_reply", None) => Behavior::UdpReply,
        ("silent", None) => Behavior::Silent,
        ("dns_answer", None) => Behavior::DnsAnswer {
            rcode: 0,
            records: Vec::new(),
        },
        ("dns_answer", Some(a)) => {
            let (rcode, records) = match a.split_once(':') {
                Some((r, recs)) => (r, Some(recs)),
                None => (a, None),
            };
            let records = match records {
                Some(r) => r
                    .split(',')
                    .map(|x| x.trim().parse::<IpAddr>().ok())
                    .collect::<Option<Vec<_>>>()?,
                None => Vec::new(),
            };
            Behavior::DnsAnswer {
                rcode: rcode.parse().ok().filter(|&r: &u8| r < 16)?,
                records,
            }
        }
        ("icmp_error", Some(a)) => {
            let (kind, from) = match a.split_once('@') {
                Some((k, f)) => (k, Some(f.parse::<IpAddr>().ok()?)),
                None => (a, None),
            };
            Behavior::IcmpError {
                error: SimIcmpError::parse(kind)?,
                from,
            }
        }
        _ => return None,
    })
}

fn parse_addr_match(key: &str, value: &str) -> Option<AddrMatch> {
    match key {
        "prefix" => {
            let (a, l) = value.split_once('/')?;
            let addr: IpAddr = a.parse().ok()?;
            let family = Family::of(addr);
            let len: u32 = l.parse().ok().filter(|&l| l <= family.width())?;
            Some(AddrMatch::Prefix {
                family,
                bits: ip_bits(addr),
                len,
            })
        }
        "low" => {
            let (v, bits) = value.split_once('/')?;
            let value = match v.strip_prefix("0x") {
                Some(h) => u128::from_str_radix(h, 16).ok()?,
                None => v.parse().ok()?,
            };
            let mask = low_mask(bits.parse().ok().filter(|&b: &u32| b <= 128)?);
            (value & !mask == 0).then_some(AddrMatch::LowBits { mask, value })
        }
        "addr" => value
            .split(',')
            .map(|a| a.trim().parse().ok())
            .collect::<Option<HashSet<IpAddr>>>()
            .map(AddrMatch::Set),
        _ => None,
    }
}

impl FromStr for ResponderRule {
    type Err = String;

    /// `<predicate...> => <behavior> [latency=MS|LO-HI] [loss=P]`, where the
    /// predicate is `any` or any of `prefix=CIDR`, `low=VALUE/BITS`,
    /// `addr=IP[,IP...]`, `port=PORTS`, `probe=NAME[,NAME...]`.
    fn from_str(line: &str) -> Result<Self, String> {
        let (pred, action) = line
            .split_once("=>")
            .ok_or_else(|| "missing `=>`".to_string())?;
        let mut rule = ResponderRule::new(AddrMatch::Any, Behavior::Silent);
        for tok in pred.split_whitespace() {
            if tok == "any" {
                continue;
            }
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| format!("bad predicate `{tok}`"))?;
            match key {
                "port" | "ports" => {
                    let set = parse_ports(value).map_err(|e| e.to_string())?;
                    rule.ports = Some(set.as_slice().to_vec());
                }
                "probe" => {
                    let probes = value
                        .split(',')
                        .map(probe_from_name)
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| format!("unknown probe in `{tok}`"))?;
                    rule.probes = Some(probes);
                }
                _ => {
                    rule.addrs = parse_addr_match(key, value)
                        .ok_or_else(|| format!("bad predicate `{tok}`"))?;
                }
            }
        }
        let mut toks = action.split_whitespace();
        let behavior = toks.next().ok_or_else(|| "missing behavior".to_string())?;
        rule.behavior =
            parse_behavior(behavior).ok_or_else(|| format!("unknown behavior `{behavior}`"))?;
        for tok in toks {
            match tok.split_once('=') {
                Some(("latency", v)) => {
                    rule.latency = parse_latency(v).ok_or_else(|| format!("bad latency `{v}`"))?
                }
                Some(("loss", v)) => {
                    let p: f64 = v.parse().map_err(|_| format!("bad loss `{v}`"))?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(format!("loss `{v}` outside [0, 1]"));
                    }
                    rule.loss = p;
                }
                _ => return Err(format!("unknown option `{tok}`")),
            }
        }
        Ok(rule)
    }
}

/// Parses a rule fixture: one rule per line, `#` comments.
pub fn parse_rules(text: &str) -> Result<Vec<ResponderRule>, RuleError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        rules.push(line.parse().map_err(|message| RuleError { line: i + 1, message })?);
    }
    Ok(rules)
}

/// A frame handed to the transport, with the probe it carries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentProbe {
    pub at: Duration,
    /// Empty unless frame retention is enabled.
    pub frame: Vec<u8>,
    pub dst: Option<IpAddr>,
    /// `None` for ICMP probes.
    pub dport: Option<u16>,
    pub probe: Option<ProbeType>,
}

/// What forged replies imitate.
#[derive(Clone, Debug)]
pub struct ForgeryTemplate {
    pub probe: ProbeType,
    /// Forged sources are drawn from this universe.
    pub sources: TargetSpec,
    /// The scanner's address.
    pub scanner: IpAddr,
    /// DNS forgeries echo this question, the strongest forgery possible.
    pub dns_qname: Option<String>,
    /// Cut every forgery short of its transport header.
    pub truncate: bool,
}

struct ForgeryStream {
    template: ForgeryTemplate,
    rng: ChaCha8Rng,
    remaining: u64,
}

#[derive(Default)]
struct State {
    pending: BinaryHeap<Reverse<(u64, u64, Vec<u8>)>>,
    next_seq: u64,
    log: Vec<SentProbe>,
    forgeries: Vec<ForgeryStream>,
    sent: u64,
}

/// Simulated network.
pub struct SimNet {
    clock: Arc<dyn Clock>,
    rules: Vec<ResponderRule>,
    seed: u64,
    keep_frames: bool,
    state: Mutex<State>,
    ready: Condvar,
}

impl std::fmt::Debug for SimNet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimNet")
            .field("rules", &self.rules.len())
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

fn unit_draw(seed: u64, domain: &[u8], key: &[u8]) -> f64 {
    (sip128(seed, domain, &[key]) >> 75) as f64 / (1u64 << 53) as f64
}

impl SimNet {
    pub fn new(rules: Vec<ResponderRule>, seed: u64, clock: Arc<dyn Clock>) -> Self {
        SimNet {
            clock,
            rules,
            seed,
            keep_frames: true,
            state: Mutex::new(State::default()),
            ready: Condvar::new(),
        }
    }

    /// Whether sent frames are kept in the log (on by default). Long
    /// rate-control runs turn this off to save memory.
    pub fn keep_frames(mut self, keep: bool) -> Self {
        self.keep_frames = keep;
        self
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn send_log(&self) -> Vec<SentProbe> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn sent_count(&self) -> u64 {
        self.state.lock().unwrap().sent
    }

    /// Replies generated but not yet received.
    pub fn pending(&self) -> usize {
        self.state.lock().unwrap().pending.len()
    }

    /// Queues a raw IP packet for delivery at `at`.
    pub fn deliver(&self, packet: Vec<u8>, at: Duration) {
        let mut st = self.state.lock().unwrap();
        let seq = st.next_seq;
        st.next_seq += 1;
        st.pending.push(Reverse((at.as_nanos() as u64, seq, packet)));
        self.ready.notify_all();
    }

    /// Queues `n` forged replies with random validation fields, receivable
    /// immediately. They are generated lazily as the receiver pulls them.
    pub fn inject_forgeries(&self, n: u64, seed: u64, template: ForgeryTemplate) -> u64 {
        let mut st = self.state.lock().unwrap();
        st.forgeries.push(ForgeryStream {
            template,
            rng: ChaCha8Rng::seed_from_u64(seed),
            remaining: n,
        });
        self.ready.notify_all();
        n
    }

    fn respond(&self, frame: &[u8], at: Duration) -> (SentProbe, Option<(Duration, Vec<u8>)>) {
        let view = parse_frame(frame);
        let mut sent = SentProbe {
            at,
            frame: if self.keep_frames { frame.to_vec() } else { Vec::new() },
            dst: view.dst(),
            dport: None,
            probe: None,
        };
        let Some(ip) = view.ip else {
            return (sent, None);
        };
        let (probe, sport, dport, seq) = match &view.kind {
            ReplyKind::IcmpEchoRequest { id, seq } => (ProbeType::IcmpEcho, *id, 0, *seq as u32),
            ReplyKind::Tcp { sport, dport, seq, flags, .. } if flags.contains(TcpFlags::SYN) => {
                (ProbeType::TcpSyn, *sport, *dport, *seq)
            }
            ReplyKind::Dns { sport, dport, message } if !message.is_response() => {
                (ProbeType::Dns, *sport, *dport, 0)
            }
            ReplyKind::Udp { sport, dport } => {
                let dns = parse_dns(view.payload()).is_some_and(|m| !m.is_response() && m.qdcount == 1);
                let probe = if dns { ProbeType::Dns } else { ProbeType::Udp };
                (probe, *sport, *dport, 0)
            }
            _ => return (sent, None),
        };
        sent.probe = Some(probe);
        sent.dport = (probe != ProbeType::IcmpEcho).then_some(dport);

        let Some(rule) = self.rules.iter().find(|r| r.matches(ip.dst, dport, probe)) else {
            return (sent, None);
        };
        let key = {
            let mut k = Vec::with_capacity(20);
            k.extend_from_slice(&ip_bits(ip.dst).to_be_bytes());
            k.extend_from_slice(&dport.to_be_bytes());
            k.push(probe as u8);
            k
        };
        if rule.loss > 0.0 && unit_draw(self.seed, b"loss", &key) < rule.loss {
            return (sent, None);
        }
        let delay = match rule.latency {
            Latency::Fixed(d) => d,
            Latency::Uniform(lo, hi) => lo + (hi - lo).mul_f64(unit_draw(self.seed, b"latency", &key)),
        };
        let reply = self.build_reply(&rule.behavior, &view, probe, sport, dport, seq, &key);
        (sent, reply.map(|r| (at + delay, r)))
    }

    #[allow(clippy::too_many_arguments)]
    fn build_reply(
        &self,
        behavior: &Behavior,
        view: &crate::codecs::PacketView<'_>,
        probe: ProbeType,
        sport: u16,
        dport: u16,
        seq: u32,
        key: &[u8],
    ) -> Option<Vec<u8>> {
        let ip = view.ip?;
        let ep = IpEndpoints::new(ip.dst, ip.src, 64).ok()?;
        let mut buf = Vec::with_capacity(128);
        match (behavior, probe) {
            (Behavior::EchoReply, ProbeType::IcmpEcho) => {
                write_icmp_echo(&mut buf, &ep, true, sport, seq as u16, view.payload()).ok()?
            }
            (Behavior::SynAck, ProbeType::TcpSyn) => {
                let isn = sip128(self.seed, b"isn", &[key]) as u32;
                let flags = TcpFlags::SYN | TcpFlags::ACK;
                write_tcp(&mut buf, &ep, dport, sport, isn, seq.wrapping_add(1), flags, 65535).ok()?
            }
            (Behavior::Rst, ProbeType::TcpSyn) => {
                let flags = TcpFlags::RST | TcpFlags::ACK;
                write_tcp(&mut buf, &ep, dport, sport, 0, seq.wrapping_add(1), flags, 0).ok()?
            }
            (Behavior::UdpReply, ProbeType::Udp | ProbeType::Dns) => {
                write_udp(&mut buf, &ep, dport, sport, view.payload()).ok()?
            }
            (Behavior::DnsAnswer { rcode, records }, ProbeType::Dns) => {
                let body = build_dns_response(view.payload(), *rcode, records).ok()?;
                write_udp(&mut buf, &ep, dport, sport, &body).ok()?
            }
            (Behavior::IcmpError { error, from }, _) => {
                let src = from.unwrap_or(ip.dst);
                let ep = IpEndpoints::new(src, ip.src, 64).ok()?;
                let (t, c) = error.type_code(ip.family);
                let rest = if *error == SimIcmpError::PacketTooBig { 1280 } else { 0 };
                let packet = strip_ethernet(view.raw())?;
                let limit = if ip.family == Family::V4 { 548 } else { 1232 };
                write_icmp_error(&mut buf, &ep, t, c, rest, &packet[..packet.len().min(limit)]).ok()?
            }
            _ => return None,
        }
        Some(buf)
    }

    fn forge(stream: &mut ForgeryStream) -> Vec<u8> {
        let t = &stream.template;
        let rng = &mut stream.rng;
        let spec = &t.sources;
        let index = rng.random::<u128>() & low_mask(spec.random_width());
        let choice = rng.random_range(0..spec.identifier().multiplicity());
        let src = spec
            .compose_ip(index, choice)
            .expect("index within randomized width");
        let ports = spec.ports().as_slice();
        let port = ports[rng.random_range(0..ports.len())];
        let ephemeral = SPORT_BASE + rng.random_range(0..SPORT_RANGE) as u16;
        let ep = IpEndpoints::new(src, t.scanner, 64).expect("forgery families agree");
        let mut buf = Vec::with_capacity(128);
        let transport_len = match t.probe {
            ProbeType::IcmpEcho => {
                write_icmp_echo(&mut buf, &ep, true, rng.random(), rng.random(), &[]).unwrap();
                8
            }
            ProbeType::TcpSyn => {
                let flags = TcpFlags::SYN | TcpFlags::ACK;
                write_tcp(&mut buf, &ep, port, ephemeral, rng.random(), rng.random(), flags, 65535)
                    .unwrap();
                20
            }
            ProbeType::Udp => {
                write_udp(&mut buf, &ep, port, ephemeral, b"forged").unwrap();
                8
            }
            ProbeType::Dns => {
                let qname = t.dns_qname.as_deref().unwrap_or("example.com");
                let qtype = if src.is_ipv4() { QTYPE_A } else { QTYPE_AAAA };
                let query = build_dns_query(qname, qtype, rng.random()).unwrap();
                let body = build_dns_response(&query, 0, &[src]).unwrap();
                write_udp(&mut buf, &ep, port, ephemeral, &body).unwrap();
                8
            }
        };
        if t.truncate {
            let ip_len = if src.is_ipv4() { 20 } else { 40 };
            buf.truncate(rng.random_range(1..ip_len + transport_len));
        }
        buf
    }
}

impl Transport for SimNet {
    fn send(&self, frame: &[u8]) -> io::Result<()> {
        let at = self.clock.now();
        let (sent, reply) = self.respond(frame, at);
        let mut st = self.state.lock().unwrap();
        st.sent += 1;
        st.log.push(sent);
        if let Some((due, packet)) = reply {
            let seq = st.next_seq;
            st.next_seq += 1;
            st.pending.push(Reverse((due.as_nanos() as u64, seq, packet)));
            self.ready.notify_all();
        }
        Ok(())
    }

    fn recv(&self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        let mut st = self.state.lock().unwrap();
        let mut waited = false;
        loop {
            let now = self.clock.now().as_nanos() as u64;
            if st.pending.peek().is_some_and(|Reverse((due, _, _))| *due <= now) {
                let Reverse((_, _, packet)) = st.pending.pop().expect("peeked");
                return Ok(Some(packet));
            }
            if let Some(stream) = st.forgeries.last_mut() {
                let packet = Self::forge(stream);
                stream.remaining -= 1;
                if stream.remaining == 0 {
                    st.forgeries.pop();
                }
                return Ok(Some(packet));
            }
            if waited || timeout.is_zero() {
                return Ok(None);
            }
            // Simulated time moves only when senders sleep, so wait briefly in
            // real time for a send or a clock jump rather than the whole timeout.
            let wait = timeout.min(Duration::from_millis(1));
            st = self.ready.wait_timeout(st, wait).unwrap().0;
            waited = true;
        }
    }
}
