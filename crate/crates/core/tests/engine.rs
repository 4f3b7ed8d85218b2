use std::collections::HashSet;
use std::io;
use std::net::IpAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use hexmap::address::{ip_bits, parse_ports, parse_target, Family, TargetSpec};
use hexmap::clock::SimClock;
use hexmap::codecs::build::write_icmp_echo;
use hexmap::codecs::{parse_frame, FrameTemplate, IpEndpoints, ReplyKind};
use hexmap::engine::{run_scan, ScanConfig, ScanError, ScanStats};
use hexmap::output::{CollectSink, NullSink};
use hexmap::permutation::Shard;
use hexmap::probe::{IcmpEcho, TcpSyn};
use hexmap::rate::RatePolicy;
use hexmap::sim::{AddrMatch, Behavior, ForgeryTemplate, Latency, ResponderRule, SimNet};
use hexmap::transport::Transport;
use hexmap::validation::{derive_token, embed, Embedded, ProbeType};

const SCANNER: &str = "2001:db8::1";

fn template() -> FrameTemplate {
    FrameTemplate::new([2, 0, 0, 0, 0, 1], [2, 0, 0, 0, 0, 2], SCANNER.parse().unwrap(), 64)
}

fn v6(expr: &str) -> TargetSpec {
    parse_target(expr, Family::V6).unwrap()
}

fn icmp_config(target: &str) -> ScanConfig {
    let mut config = ScanConfig::new(vec![v6(target)], Arc::new(IcmpEcho::default()), template());
    config.cooldown = Duration::from_secs(1);
    config.rate = RatePolicy::pps(100_000);
    config
}

fn sim(rules: Vec<ResponderRule>) -> (Arc<SimClock>, SimNet) {
    let clock = Arc::new(SimClock::new());
    let net = SimNet::new(rules, 11, clock.clone());
    (clock, net)
}

fn scan(config: &ScanConfig, net: &SimNet, clock: &SimClock) -> (ScanStats, CollectSink) {
    let mut sink = CollectSink::new();
    let stats = run_scan(config, Some(net), &mut sink, clock).expect("scan");
    (stats, sink)
}

#[test]
fn dry_run_covers_a_nibble() {
    let spec = parse_target("192.0.2.0/24-28", Family::V4).unwrap();
    let tpl = FrameTemplate::new([0; 6], [0; 6], "192.0.2.1".parse().unwrap(), 64);
    let mut config = ScanConfig::new(vec![spec], Arc::new(IcmpEcho::default()), tpl);
    config.dry_run = true;
    let mut sink = CollectSink::new();
    let stats = run_scan(&config, None, &mut sink, &SimClock::new()).unwrap();
    let dsts: HashSet<IpAddr> = sink
        .frames()
        .iter()
        .map(|f| parse_frame(f).dst().unwrap())
        .collect();
    let expected: HashSet<IpAddr> = (0..16u8)
        .map(|i| IpAddr::from([192, 0, 2, i << 4]))
        .collect();
    assert_eq!(stats.sent, 16);
    assert_eq!(dsts, expected);
}

#[test]
fn max_results_stops_early() {
    let (clock, net) = sim(vec![ResponderRule::new(AddrMatch::Any, Behavior::EchoReply)]);
    let mut config = icmp_config("2001:db8::/112");
    config.max_results = Some(10);
    let (stats, sink) = scan(&config, &net, &clock);
    assert_eq!(stats.hits, 10);
    assert_eq!(sink.records().len(), 10);
    assert!(stats.sent < 65_536, "sent {}", stats.sent);
}

#[test]
fn every_tuple_exactly_once_across_shards_and_ports() {
    for ports in ["80", "80,443", "22,80,443"] {
        let spec = v6("2001:db8::/116").with_ports(parse_ports(ports).unwrap());
        let nports = ports.split(',').count();
        for shards in 1..=4u32 {
            let mut seen = HashSet::new();
            let mut total = 0;
            for i in 0..shards {
                let (clock, net) = sim(vec![]);
                let mut config = ScanConfig::new(vec![spec.clone()], Arc::new(TcpSyn), template());
                config.shard = Shard::new(i, shards).unwrap();
                config.sender_threads = 2;
                config.rate = RatePolicy::unlimited();
                config.cooldown = Duration::ZERO;
                config.seed = 5;
                scan(&config, &net, &clock);
                for p in net.send_log() {
                    seen.insert((p.dst.unwrap(), p.dport.unwrap()));
                    total += 1;
                }
            }
            assert_eq!(total, 4096 * nports, "ports {ports} shards {shards}");
            assert_eq!(seen.len(), total);
        }
    }
}

/// Holds every reply back until the sender has finished, to show the
/// sender never waits on the receiver.
struct Gated {
    inner: SimNet,
    open: AtomicBool,
    sent: Mutex<u64>,
    expect: u64,
}

impl Transport for Gated {
    fn send(&self, frame: &[u8]) -> io::Result<()> {
        let mut sent = self.sent.lock().unwrap();
        *sent += 1;
        if *sent == self.expect {
            self.open.store(true, Ordering::SeqCst);
        }
        self.inner.send(frame)
    }

    fn recv(&self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        if self.open.load(Ordering::SeqCst) {
            self.inner.recv(timeout)
        } else {
            std::thread::sleep(Duration::from_micros(50));
            Ok(None)
        }
    }
}

#[test]
fn sending_is_decoupled_from_receiving() {
    let (clock, net) = sim(vec![ResponderRule::new(AddrMatch::Any, Behavior::EchoReply)]);
    let gated = Gated {
        inner: net,
        open: AtomicBool::new(false),
        sent: Mutex::new(0),
        expect: 256,
    };
    let config = icmp_config("2001:db8::/120");
    let mut sink = CollectSink::new();
    let stats = run_scan(&config, Some(&gated), &mut sink, clock.as_ref()).unwrap();
    assert_eq!(stats.sent, 256);
    assert_eq!(stats.hits, 256);
}

#[test]
fn replies_after_the_cooldown_are_missed() {
    for (latency_ms, expect_hits) in [(900u64, 256u64), (1_500, 0)] {
        let rule = ResponderRule::new(AddrMatch::Any, Behavior::EchoReply)
            .latency(Latency::Fixed(Duration::from_millis(latency_ms)));
        let (clock, net) = sim(vec![rule]);
        let mut config = icmp_config("2001:db8::/120");
        config.rate = RatePolicy::unlimited();
        let (stats, _) = scan(&config, &net, &clock);
        assert_eq!(stats.hits, expect_hits, "latency {latency_ms} ms");
    }
}

#[test]
fn loss_is_applied_per_probe() {
    let lossy = |loss| vec![ResponderRule::new(AddrMatch::Any, Behavior::EchoReply).loss(loss)];
    let (clock, net) = sim(lossy(1.0));
    let (stats, _) = scan(&icmp_config("2001:db8::/116"), &net, &clock);
    assert_eq!(stats.hits, 0);

    let (clock, net) = sim(lossy(0.5));
    let (stats, _) = scan(&icmp_config("2001:db8::/116"), &net, &clock);
    // Binomial(4096, 0.5): sd 32, allow 5 sd
    assert!((2048 - 160..=2048 + 160).contains(&stats.hits), "hits {}", stats.hits);
}

#[test]
fn only_matching_low_byte_answers() {
    let rule = ResponderRule::new(AddrMatch::LowBits { mask: 0xff, value: 0x01 }, Behavior::EchoReply);
    let (clock, net) = sim(vec![rule]);
    let (stats, sink) = scan(&icmp_config("2001:db8::/120"), &net, &clock);
    assert_eq!(stats.sent, 256);
    assert_eq!(stats.hits, 1);
    assert_eq!(sink.records()[0].target, Some("2001:db8::1".parse().unwrap()));
}

#[test]
fn same_seed_same_send_order() {
    let order = |seed| {
        let (clock, net) = sim(vec![]);
        let mut config = icmp_config("2001:db8::/120");
        config.seed = seed;
        config.cooldown = Duration::ZERO;
        scan(&config, &net, &clock);
        net.send_log().into_iter().map(|p| p.dst).collect::<Vec<_>>()
    };
    assert_eq!(order(3), order(3));
    assert_ne!(order(3), order(4));
}

fn genuine_echo_reply(config: &ScanConfig, from: IpAddr) -> Vec<u8> {
    let token = derive_token(&config.secret(), from, 0, ProbeType::IcmpEcho);
    let Embedded::Icmp { id, seq } = embed(token, ProbeType::IcmpEcho) else {
        unreachable!()
    };
    let ep = IpEndpoints::new(from, SCANNER.parse().unwrap(), 60).unwrap();
    let mut buf = Vec::new();
    write_icmp_echo(&mut buf, &ep, true, id, seq, &[]).unwrap();
    buf
}

#[test]
fn replayed_reply_is_a_late_duplicate() {
    let (clock, net) = sim(vec![]);
    let mut config = icmp_config("2001:db8::/124");
    config.dedup = true;
    let target: IpAddr = "2001:db8::3".parse().unwrap();
    let reply = genuine_echo_reply(&config, target);
    net.deliver(reply.clone(), Duration::from_millis(10));
    net.deliver(reply, Duration::from_millis(20));
    let (stats, sink) = scan(&config, &net, &clock);
    assert_eq!(stats.hits, 1);
    assert_eq!(stats.rejected.late_duplicate, 1);
    assert_eq!(sink.records().len(), 1);

    // with output_all the duplicate is written, flagged as a repeat
    let (clock, net) = sim(vec![]);
    config.output_all = true;
    let reply = genuine_echo_reply(&config, target);
    net.deliver(reply.clone(), Duration::from_millis(10));
    net.deliver(reply, Duration::from_millis(20));
    let (_, sink) = scan(&config, &net, &clock);
    let records = sink.records();
    assert_eq!(records.len(), 2);
    assert!(records.iter().any(|r| r.repeat));
}

#[test]
fn truncated_forgeries_are_unparseable() {
    let (clock, net) = sim(vec![]);
    net.inject_forgeries(
        1000,
        1,
        ForgeryTemplate {
            probe: ProbeType::TcpSyn,
            sources: v6("2001:db8::/112").with_ports(parse_ports("80").unwrap()),
            scanner: SCANNER.parse().unwrap(),
            dns_qname: None,
            truncate: true,
        },
    );
    let mut config = ScanConfig::new(
        vec![v6("2001:db8:1::1").with_ports(parse_ports("80").unwrap())],
        Arc::new(TcpSyn),
        template(),
    );
    config.cooldown = Duration::ZERO;
    let (stats, _) = scan(&config, &net, &clock);
    assert_eq!(stats.hits, 0);
    assert_eq!(stats.rejected.unparseable, 1000);
}

#[test]
fn replies_carry_the_probed_target() {
    let rule = ResponderRule::new(AddrMatch::Any, Behavior::SynAck);
    let (clock, net) = sim(vec![rule]);
    let spec = v6("2001:db8::/124").with_ports(parse_ports("443").unwrap());
    let mut config = ScanConfig::new(vec![spec.clone()], Arc::new(TcpSyn), template());
    config.cooldown = Duration::from_secs(1);
    let (stats, sink) = scan(&config, &net, &clock);
    assert_eq!(stats.hits, 16);
    assert_eq!(stats.successes, 16);
    for r in sink.records() {
        assert!(spec.contains(ip_bits(r.target.unwrap())));
        assert_eq!(r.outcome, "synack");
        assert_eq!(r.sport, Some(443));
    }
    let frame = &net.send_log()[0].frame;
    assert!(matches!(parse_frame(frame).kind, ReplyKind::Tcp { dport: 443, .. }));
}

#[test]
fn mixed_family_targets_are_rejected() {
    let spec = parse_target("192.0.2.0/24", Family::V4).unwrap();
    let config = ScanConfig::new(vec![spec], Arc::new(IcmpEcho::default()), template());
    let err = run_scan(&config, None, &mut NullSink::default(), &SimClock::new()).unwrap_err();
    assert!(matches!(err, ScanError::Config(_)));
}
