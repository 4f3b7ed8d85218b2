//! Scan orchestration: sender threads walk shards of the permutation,
//! filter, build and transmit probes under the rate limiter, while a single
//! receiver validates replies statelessly and writes results.

use std::collections::HashSet;
use std::io;
use std::net::IpAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::ToPrimitive;

use crate::address::{PortSet, TargetSpec};
use crate::clock::Clock;
use crate::codecs::{parse_reply, FrameTemplate};
use crate::filter::PrefixFilter;
use crate::output::{ReplyRecord, ResultSink};
use crate::permutation::{shard_init, CycleParams, CycleState, Index, PermutationError, Shard};
use crate::probe::{BuildCtx, ProbeModule};
use crate::rate::{RateError, RatePolicy, TokenBucket};
use crate::transport::Transport;
use crate::validation::{RejectReason, ScanSecret, Verdict};

/// Default post-send window for late replies.
pub const DEFAULT_COOLDOWN: Duration = Duration::from_secs(8);
const RECV_POLL: Duration = Duration::from_millis(20);

#[derive(Clone)]
pub struct ScanConfig {
    /// Scanned one after another; each is its own permutation.
    pub targets: Vec<TargetSpec>,
    pub probe: Arc<dyn ProbeModule>,
    pub rate: RatePolicy,
    pub seed: u64,
    /// Validation key; derived from `seed` when unset.
    pub secret: Option<ScanSecret>,
    pub shard: Shard,
    pub sender_threads: u32,
    pub cooldown: Duration,
    pub dry_run: bool,
    pub max_results: Option<u64>,
    pub max_runtime: Option<Duration>,
    pub filter: Arc<PrefixFilter>,
    pub template: FrameTemplate,
    /// Mark repeated replies for the same (target, port) instead of counting
    /// them as hits.
    pub dedup: bool,
    /// Also write rejected replies.
    pub output_all: bool,
}

impl std::fmt::Debug for ScanConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScanConfig")
            .field("targets", &self.targets)
            .field("probe", &self.probe.name())
            .field("rate", &self.rate)
            .field("seed", &self.seed)
            .field("shard", &self.shard)
            .field("sender_threads", &self.sender_threads)
            .field("cooldown", &self.cooldown)
            .field("dry_run", &self.dry_run)
            .finish_non_exhaustive()
    }
}

impl ScanConfig {
    pub fn new(targets: Vec<TargetSpec>, probe: Arc<dyn ProbeModule>, template: FrameTemplate) -> Self {
        ScanConfig {
            targets,
            probe,
            rate: RatePolicy::pps(10_000),
            seed: 0,
            secret: None,
            shard: Shard::WHOLE,
            sender_threads: 1,
            cooldown: DEFAULT_COOLDOWN,
            dry_run: false,
            max_results: None,
            max_runtime: None,
            filter: Arc::new(PrefixFilter::new()),
            template,
            dedup: false,
            output_all: false,
        }
    }

    pub fn secret(&self) -> ScanSecret {
        self.secret
            .clone()
            .unwrap_or_else(|| ScanSecret::from_seed(self.seed))
    }

    /// Targets as actually scanned: ICMP ignores ports.
    pub fn effective_targets(&self) -> Vec<TargetSpec> {
        self.targets
            .iter()
            .map(|t| {
                if self.probe.uses_ports() {
                    t.clone()
                } else {
                    t.clone().with_ports(PortSet::sentinel())
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        let fail = |m: String| Err(ScanError::Config(m));
        if self.targets.is_empty() {
            return fail("no targets".into());
        }
        if self.sender_threads == 0 {
            return fail("at least one sender thread is needed".into());
        }
        let family = self.template.family();
        for t in &self.targets {
            if t.family() != family {
                return fail(format!("target {t} does not match source address family {family}"));
            }
            if self.probe.uses_ports() && t.ports().is_sentinel() {
                return fail(format!("probe module {} needs target ports (-p)", self.probe.name()));
            }
        }
        self.rate
            .effective_pps(self.probe.frame_len(family) as u64)
            .map_err(ScanError::Rate)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RejectCounts {
    pub bad_token: u64,
    pub unparseable: u64,
    pub foreign_port: u64,
    pub late_duplicate: u64,
}

impl RejectCounts {
    pub fn total(&self) -> u64 {
        self.bad_token + self.unparseable + self.foreign_port + self.late_duplicate
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub sent: u64,
    pub recv: u64,
    /// Accepted replies (repeats excluded when dedup is on).
    pub hits: u64,
    /// Hits whose outcome is a positive answer.
    pub successes: u64,
    pub rejected: RejectCounts,
    pub blocked_skips: u64,
    pub send_errors: u64,
    /// Rows handed to the sink (records, or frames in dry-run mode).
    pub rows: u64,
    pub start: Duration,
    pub last_send: Duration,
    pub end: Duration,
}

impl ScanStats {
    pub fn duration(&self) -> Duration {
        self.end.saturating_sub(self.start)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Permutation(#[from] PermutationError),
    #[error("transport failure: {source}")]
    Transport {
        source: io::Error,
        stats: Box<ScanStats>,
    },
    #[error("output failure: {source}")]
    Output {
        source: io::Error,
        stats: Box<ScanStats>,
    },
}

impl ScanError {
    /// Counters at the time of a runtime failure.
    pub fn partial_stats(&self) -> Option<&ScanStats> {
        match self {
            ScanError::Transport { stats, .. } | ScanError::Output { stats, .. } => Some(stats),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProgressReport {
    pub sent: u64,
    pub percent: f64,
    /// `None` until a rate can be measured.
    pub eta: Option<Duration>,
    pub pps: f64,
    pub hits: u64,
}

/// Probe tuples left after filtering: `Σ space − excluded × |ports|`.
pub fn effective_size(targets: &[TargetSpec], filter: &PrefixFilter) -> BigUint {
    targets
        .iter()
        .map(|t| t.space_size() - filter.count_excluded(t) * BigUint::from(t.ports().len()))
        .sum()
}

/// Completion and ETA from counters against a precomputed effective size.
pub fn progress_from(stats: &ScanStats, effective: &BigUint, now: Duration) -> ProgressReport {
    let total = effective.to_f64().unwrap_or(f64::MAX);
    let percent = if total > 0.0 {
        stats.sent as f64 * 100.0 / total
    } else {
        100.0
    };
    let elapsed = now.saturating_sub(stats.start).as_secs_f64();
    let pps = if elapsed > 0.0 {
        stats.sent as f64 / elapsed
    } else {
        0.0
    };
    let eta = (pps > 0.0).then(|| {
        let remaining = (total - stats.sent as f64).max(0.0);
        Duration::from_secs_f64((remaining / pps).min(u64::MAX as f64 / 2.0))
    });
    ProgressReport {
        sent: stats.sent,
        percent,
        eta,
        pps,
        hits: stats.hits,
    }
}

pub fn progress_report(
    stats: &ScanStats,
    targets: &[TargetSpec],
    filter: &PrefixFilter,
    clock: &dyn Clock,
) -> ProgressReport {
    progress_from(stats, &effective_size(targets, filter), clock.now())
}

#[derive(Default)]
struct Counters {
    sent: AtomicU64,
    recv: AtomicU64,
    hits: AtomicU64,
    successes: AtomicU64,
    bad_token: AtomicU64,
    unparseable: AtomicU64,
    foreign_port: AtomicU64,
    late_duplicate: AtomicU64,
    blocked_skips: AtomicU64,
    send_errors: AtomicU64,
    rows: AtomicU64,
}

impl Counters {
    fn snapshot(&self, start: Duration, last_send: Duration, end: Duration) -> ScanStats {
        let g = |a: &AtomicU64| a.load(Ordering::SeqCst);
        ScanStats {
            sent: g(&self.sent),
            recv: g(&self.recv),
            hits: g(&self.hits),
            successes: g(&self.successes),
            rejected: RejectCounts {
                bad_token: g(&self.bad_token),
                unparseable: g(&self.unparseable),
                foreign_port: g(&self.foreign_port),
                late_duplicate: g(&self.late_duplicate),
            },
            blocked_skips: g(&self.blocked_skips),
            send_errors: g(&self.send_errors),
            rows: g(&self.rows),
            start,
            last_send,
            end,
        }
    }

    fn reject(&self, reason: RejectReason) {
        let c = match reason {
            RejectReason::BadToken => &self.bad_token,
            RejectReason::Unparseable => &self.unparseable,
            RejectReason::ForeignPort => &self.foreign_port,
            RejectReason::LateDuplicate => &self.late_duplicate,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }
}

/// A target with its cycle and mixed-radix layout
/// `index = addr_index·(P·M) + port_index·M + id_choice`.
struct Prepared {
    spec: TargetSpec,
    params: CycleParams,
    multiplicity: u128,
    per_addr: u128,
    per_addr_big: BigUint,
}

impl Prepared {
    fn new(spec: TargetSpec, seed: u64) -> Result<Self, PermutationError> {
        let multiplicity = spec.identifier().multiplicity() as u128;
        let per_addr = spec.ports().len() as u128 * multiplicity;
        let params = CycleParams::new(spec.space_size(), seed)?;
        Ok(Prepared {
            spec,
            params,
            multiplicity,
            per_addr,
            per_addr_big: BigUint::from(per_addr),
        })
    }

    fn split(&self, index: Index) -> (u128, usize, usize) {
        let (addr, rest) = match index {
            Index::Word(v) => ((v as u128) / self.per_addr, (v as u128) % self.per_addr),
            Index::Big(b) => {
                let (q, r) = b.div_rem(&self.per_addr_big);
                (
                    q.to_u128().expect("address index fits the address width"),
                    r.to_u128().expect("remainder below |ports|·multiplicity"),
                )
            }
        };
        let port = (rest / self.multiplicity) as usize;
        let id = (rest % self.multiplicity) as usize;
        (addr, port, id)
    }
}

struct Walker<'a> {
    targets: &'a [Prepared],
    shard: Shard,
    current: usize,
    state: Option<CycleState>,
}

impl<'a> Walker<'a> {
    fn new(targets: &'a [Prepared], shard: Shard) -> Self {
        Walker {
            targets,
            shard,
            current: 0,
            state: targets.first().map(|t| shard_init(&t.params, shard)),
        }
    }

    /// Next allowed (address, port); `None` when every target is exhausted.
    fn next(&mut self, filter: &PrefixFilter, blocked: &AtomicU64) -> Option<(IpAddr, u16)> {
        loop {
            let state = self.state.as_mut()?;
            let Some(index) = state.next_index() else {
                self.current += 1;
                self.state = self
                    .targets
                    .get(self.current)
                    .map(|t| shard_init(&t.params, self.shard));
                continue;
            };
            let target = &self.targets[self.current];
            let (addr_index, port_index, id) = target.split(index);
            let spec = &target.spec;
            let bits = spec.compose(addr_index, id).expect("index within universe");
            if !filter.is_allowed_bits(bits, spec.family()) {
                blocked.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            let port = spec.ports().get(port_index).expect("port index in range");
            return Some((spec.family().to_ip(bits), port));
        }
    }
}

fn is_transient(err: &io::Error) -> bool {
    err.kind() == io::ErrorKind::WouldBlock || err.raw_os_error() == Some(libc::ENOBUFS)
}

struct Shared<'a> {
    config: &'a ScanConfig,
    secret: ScanSecret,
    counters: Counters,
    stop: AtomicBool,
    limit_reached: AtomicBool,
    receiver_done: AtomicBool,
    failure: Mutex<Option<ScanError>>,
    sink: Mutex<&'a mut dyn ResultSink>,
    clock: &'a dyn Clock,
    start: Duration,
    last_send_ns: AtomicU64,
}

impl Shared<'_> {
    fn fail(&self, err: ScanError) {
        self.stop.store(true, Ordering::SeqCst);
        let mut slot = self.failure.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
    }

    fn since_start(&self) -> Duration {
        self.clock.now().saturating_sub(self.start)
    }
}

fn sender(
    shared: &Shared<'_>,
    targets: &[Prepared],
    shard: Shard,
    bucket: &TokenBucket,
    transport: Option<&dyn Transport>,
) {
    let config = shared.config;
    let mut walker = Walker::new(targets, shard);
    let mut buf = Vec::with_capacity(256);
    let batch = config.rate.batch;
    'outer: loop {
        if shared.stop.load(Ordering::Relaxed) {
            break;
        }
        if let Some(limit) = config.max_runtime {
            if shared.since_start() >= limit {
                break;
            }
        }
        let mut granted = bucket.acquire_blocking(batch, shared.clock);
        while granted > 0 {
            let Some((dst, port)) = walker.next(&config.filter, &shared.counters.blocked_skips) else {
                break 'outer;
            };
            let ctx = BuildCtx {
                template: &config.template,
                secret: &shared.secret,
                now_ns: shared.since_start().as_nanos() as u64,
            };
            if let Err(e) = config.probe.build_into(&ctx, &mut buf, dst, port) {
                shared.fail(ScanError::Config(format!("cannot build probe for {dst}: {e}")));
                break 'outer;
            }
            match transport {
                None => {
                    let res = shared.sink.lock().unwrap().write_frame(&buf);
                    if let Err(source) = res {
                        shared.fail(ScanError::Output {
                            source,
                            stats: Box::default(),
                        });
                        break 'outer;
                    }
                    shared.counters.rows.fetch_add(1, Ordering::Relaxed);
                }
                Some(t) => {
                    let mut attempt = 0;
                    loop {
                        match t.send(&buf) {
                            Ok(()) => break,
                            Err(e) if is_transient(&e) && attempt < 3 => {
                                attempt += 1;
                                std::thread::yield_now();
                            }
                            Err(e) if is_transient(&e) => {
                                shared.counters.send_errors.fetch_add(1, Ordering::Relaxed);
                                break;
                            }
                            Err(source) => {
                                shared.counters.send_errors.fetch_add(1, Ordering::Relaxed);
                                shared.fail(ScanError::Transport {
                                    source,
                                    stats: Box::default(),
                                });
                                break 'outer;
                            }
                        }
                    }
                }
            }
            shared.counters.sent.fetch_add(1, Ordering::Relaxed);
            shared
                .last_send_ns
                .fetch_max(shared.clock.now().as_nanos() as u64, Ordering::SeqCst);
            granted -= 1;
        }
    }
}

fn receiver(shared: &Shared<'_>, transport: &dyn Transport) {
    let config = shared.config;
    let probe = config.probe.as_ref();
    let mut seen: HashSet<(IpAddr, u16)> = HashSet::new();
    let write = |record: &ReplyRecord| -> bool {
        match shared.sink.lock().unwrap().write_record(record) {
            Ok(()) => {
                shared.counters.rows.fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(source) => {
                shared.fail(ScanError::Output {
                    source,
                    stats: Box::default(),
                });
                false
            }
        }
    };
    loop {
        let done = shared.receiver_done.load(Ordering::SeqCst);
        let timeout = if done { Duration::ZERO } else { RECV_POLL };
        let packet = match transport.recv(timeout) {
            Ok(Some(p)) => p,
            Ok(None) if done => return,
            Ok(None) => continue,
            Err(source) => {
                shared.fail(ScanError::Transport {
                    source,
                    stats: Box::default(),
                });
                return;
            }
        };
        let counters = &shared.counters;
        counters.recv.fetch_add(1, Ordering::Relaxed);
        let view = parse_reply(&packet);
        let now = shared.since_start();
        let verdict = probe.validate(&view, &shared.secret);
        let base = |outcome: String| ReplyRecord {
            saddr: view.src().unwrap_or(IpAddr::from([0, 0, 0, 0])),
            daddr: view.dst().unwrap_or(IpAddr::from([0, 0, 0, 0])),
            target: None,
            sport: None,
            dport: None,
            outcome,
            probe: probe.name(),
            success: false,
            validated: false,
            repeat: false,
            ttl: view.ttl(),
            rtt: None,
            detail: None,
            payload: view.payload().to_vec(),
            timestamp: now,
        };
        match verdict {
            Verdict::Accept(acc) => {
                let repeat = config.dedup && !seen.insert((acc.target, acc.port));
                let mut record = base(acc.outcome.to_string());
                record.target = Some(acc.target);
                record.sport = probe.uses_ports().then_some(acc.port);
                record.dport = view_dport(&view);
                record.success = acc.success;
                record.validated = true;
                record.repeat = repeat;
                record.detail = acc.detail;
                record.rtt = probe
                    .rtt_ns(&view, now.as_nanos() as u64)
                    .map(Duration::from_nanos);
                if repeat {
                    counters.reject(RejectReason::LateDuplicate);
                    if config.output_all && !write(&record) {
                        return;
                    }
                    continue;
                }
                let hits = counters.hits.fetch_add(1, Ordering::SeqCst) + 1;
                if acc.success {
                    counters.successes.fetch_add(1, Ordering::Relaxed);
                }
                if !write(&record) {
                    return;
                }
                if config.max_results.is_some_and(|m| hits >= m) {
                    shared.limit_reached.store(true, Ordering::SeqCst);
                    shared.stop.store(true, Ordering::SeqCst);
                    return;
                }
            }
            Verdict::Reject(reason) => {
                counters.reject(reason);
                if config.output_all && view.ip.is_some() && !write(&base(reason.name().to_string())) {
                    return;
                }
            }
        }
    }
}

fn view_dport(view: &crate::codecs::PacketView<'_>) -> Option<u16> {
    use crate::codecs::ReplyKind;
    match view.kind {
        ReplyKind::Tcp { dport, .. } | ReplyKind::Udp { dport, .. } | ReplyKind::Dns { dport, .. } => {
            Some(dport)
        }
        _ => None,
    }
}

/// Runs a scan to completion. `transport` may be `None` only in dry-run
/// mode, where built frames go to `sink` instead.
pub fn run_scan(
    config: &ScanConfig,
    transport: Option<&dyn Transport>,
    sink: &mut dyn ResultSink,
    clock: &dyn Clock,
) -> Result<ScanStats, ScanError> {
    run_scan_with_progress(config, transport, sink, clock, None)
}

/// Progress callback and the real-time interval between calls.
pub type ProgressHook<'a> = (&'a (dyn Fn(&ProgressReport) + Sync), Duration);

pub fn run_scan_with_progress(
    config: &ScanConfig,
    transport: Option<&dyn Transport>,
    sink: &mut dyn ResultSink,
    clock: &dyn Clock,
    progress: Option<ProgressHook<'_>>,
) -> Result<ScanStats, ScanError> {
    config.validate()?;
    let transport = if config.dry_run { None } else { transport };
    if !config.dry_run && transport.is_none() {
        return Err(ScanError::Config("no transport given for a live scan".into()));
    }
    let targets = config.effective_targets();
    let prepared = targets
        .iter()
        .cloned()
        .map(|t| Prepared::new(t, config.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let frame_len = config.probe.frame_len(config.template.family()) as u64;
    let start = clock.now();
    let bucket = TokenBucket::from_policy(&config.rate, frame_len, start)?;
    let effective = progress.map(|_| effective_size(&targets, &config.filter));

    let shared = Shared {
        config,
        secret: config.secret(),
        counters: Counters::default(),
        stop: AtomicBool::new(false),
        limit_reached: AtomicBool::new(false),
        receiver_done: AtomicBool::new(false),
        failure: Mutex::new(None),
        sink: Mutex::new(sink),
        clock,
        start,
        last_send_ns: AtomicU64::new(start.as_nanos() as u64),
    };
    let shards: Vec<Shard> = (0..config.sender_threads)
        .map(|part| config.shard.subdivide(part, config.sender_threads))
        .collect::<Result<_, _>>()?;

    std::thread::scope(|s| {
        let recv_handle = transport.map(|t| s.spawn(|| receiver(&shared, t)));
        let senders: Vec<_> = shards
            .iter()
            .map(|&shard| {
                let (shared, prepared, bucket) = (&shared, &prepared, &bucket);
                s.spawn(move || sender(shared, prepared, shard, bucket, transport))
            })
            .collect();
        if let (Some((hook, interval)), Some(effective)) = (progress, effective.as_ref()) {
            while senders.iter().any(|h| !h.is_finished()) {
                std::thread::sleep(interval);
                let stats = shared.counters.snapshot(start, start, clock.now());
                hook(&progress_from(&stats, effective, clock.now()));
            }
        }
        for h in senders {
            h.join().expect("sender thread panicked");
        }
        if let Some(h) = recv_handle {
            let last = Duration::from_nanos(shared.last_send_ns.load(Ordering::SeqCst));
            let deadline = last + config.cooldown;
            // The receiver may hit max_results during the cooldown.
            while !shared.limit_reached.load(Ordering::SeqCst)
                && shared.failure.lock().unwrap().is_none()
                && clock.now() < deadline
            {
                let step = if clock.is_simulated() {
                    deadline
                } else {
                    (clock.now() + Duration::from_millis(50)).min(deadline)
                };
                clock.sleep_until(step);
            }
            shared.receiver_done.store(true, Ordering::SeqCst);
            h.join().expect("receiver thread panicked");
        }
    });

    let end = clock.now();
    let last_send = Duration::from_nanos(shared.last_send_ns.load(Ordering::SeqCst));
    let stats = shared.counters.snapshot(start, last_send, end);
    if let Some(err) = shared.failure.into_inner().unwrap() {
        return Err(match err {
            ScanError::Transport { source, .. } => ScanError::Transport {
                source,
                stats: Box::new(stats),
            },
            ScanError::Output { source, .. } => ScanError::Output {
                source,
                stats: Box::new(stats),
            },
            other => other,
        });
    }
    Ok(stats)
}
