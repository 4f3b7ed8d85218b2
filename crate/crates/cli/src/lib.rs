//! Flag parsing and scan orchestration behind the `hexmap` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{IsTerminal, Write};
use std::net::IpAddr;
use std::sync::Arc;
use std::time::Duration;

use clap::{ArgAction, CommandFactory, Parser};
use hexmap::address::{parse_identifier, parse_ports, parse_target, Family, IdentifierSpec, TargetSpec};
use hexmap::clock::{Clock, RealClock, SimClock};
use hexmap::codecs::FrameTemplate;
use hexmap::engine::{effective_size, run_scan_with_progress, ProgressReport, ScanConfig, ScanError, ScanStats};
use hexmap::filter::{Action, PrefixFilter};
use hexmap::output::{open_sink, parse_fields, Format};
use hexmap::permutation::Shard;
use hexmap::probe::{module_by_name, ProbeOptions, MODULE_NAMES};
use hexmap::rate::{parse_bandwidth, RateMode, RatePolicy};
use hexmap::sim::{parse_rules, SimNet};
use hexmap::transport::Transport;
use num_bigint::BigUint;
use num_traits::ToPrimitive;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hexmap",
    version,
    about = "Stateless IPv4/IPv6 scanner over randomized address-space slices",
    long_about = "Probes every address of one or more target ranges in a pseudorandom order, \
                  matching replies statelessly. A target is ADDR, ADDR/PLEN or ADDR/PLEN-RLO: \
                  bits [PLEN, RLO) are enumerated, bits above are fixed from ADDR and bits \
                  below form the interface identifier.",
    after_help = "Scan only networks you are authorized to test. Use --dry-run or --simulate \
                  to try things out without sending packets."
)]
pub struct Args {
    /// Target ranges, scanned one after another.
    #[arg(value_name = "TARGET", required_unless_present_any = ["list_probe_modules", "man"])]
    pub targets: Vec<String>,

    /// Scan IPv4 targets.
    #[arg(short = '4', long = "ipv4", conflicts_with = "ipv6")]
    pub ipv4: bool,

    /// Scan IPv6 targets.
    #[arg(short = '6', long = "ipv6")]
    pub ipv6: bool,

    /// Destination ports, e.g. `22,80,8000-8010`.
    #[arg(short = 'p', long = "target-ports", value_name = "PORTS")]
    pub ports: Option<String>,

    /// Probe module: icmp_echo, tcp_syn, udp or dns.
    #[arg(short = 'M', long = "probe-module", default_value = "icmp_echo")]
    pub probe_module: String,

    /// List probe modules and exit.
    #[arg(long)]
    pub list_probe_modules: bool,

    /// Output file, `-` for stdout.
    #[arg(short = 'o', long = "output-file", default_value = "-")]
    pub output_file: String,

    /// Output format: txt, csv or jsonl.
    #[arg(short = 'O', long = "output-format", default_value = "txt")]
    pub output_format: Format,

    /// Comma-separated output fields.
    #[arg(short = 'f', long = "output-fields", value_name = "FIELDS")]
    pub output_fields: Option<String>,

    /// Also write replies that failed validation or were repeats.
    #[arg(long)]
    pub output_all: bool,

    /// Send rate in packets per second; 0 means unlimited.
    #[arg(short = 'r', long = "rate", value_name = "PPS")]
    pub rate: Option<u64>,

    /// Send rate in bits per second (K/M/G suffixes); wins over --rate.
    #[arg(short = 'B', long = "bandwidth", value_name = "BPS")]
    pub bandwidth: Option<String>,

    /// Packets sent per rate-limiter grant.
    #[arg(long, value_name = "N")]
    pub batch: Option<u64>,

    /// Permutation and validation seed; random when omitted.
    #[arg(short = 'e', long = "seed")]
    pub seed: Option<u64>,

    /// Scan only shard I of N (zero-based), e.g. `1/4`.
    #[arg(long, value_name = "I/N")]
    pub shard: Option<String>,

    /// Sender threads.
    #[arg(short = 'T', long = "sender-threads", default_value_t = 1)]
    pub sender_threads: u32,

    /// File of prefixes never to probe.
    #[arg(short = 'b', long = "blocklist-file", env = "HEXMAP_BLOCKLIST", value_name = "PATH")]
    pub blocklist: Option<String>,

    /// File of prefixes to restrict probing to.
    #[arg(short = 'w', long = "allowlist-file", value_name = "PATH")]
    pub allowlist: Option<String>,

    /// Network interface for live scans.
    #[arg(short = 'i', long = "interface", value_name = "IFACE")]
    pub interface: Option<String>,

    /// Source address (defaults to the interface's address).
    #[arg(short = 'S', long = "source-ip", value_name = "ADDR")]
    pub source_ip: Option<IpAddr>,

    /// Source MAC address (defaults to the interface's).
    #[arg(long, value_name = "MAC")]
    pub source_mac: Option<String>,

    /// Next-hop MAC address (defaults to the gateway's ARP entry).
    #[arg(short = 'G', long, value_name = "MAC")]
    pub gateway_mac: Option<String>,

    /// IP TTL / hop limit of probes.
    #[arg(long, default_value_t = 255)]
    pub ttl: u8,

    /// Build probes and write them to the output instead of sending.
    #[arg(short = 'd', long)]
    pub dry_run: bool,

    /// Scan against an in-process simulated network described by a rule file.
    #[arg(long, value_name = "RULES", conflicts_with = "dry_run")]
    pub simulate: Option<String>,

    /// Seconds to keep receiving after the last probe.
    #[arg(short = 'c', long = "cooldown-time", default_value_t = 8)]
    pub cooldown: u64,

    /// Stop after this many accepted replies.
    #[arg(short = 'N', long = "max-results")]
    pub max_results: Option<u64>,

    /// Stop sending after this many seconds.
    #[arg(short = 't', long = "max-runtime", value_name = "SECS")]
    pub max_runtime: Option<u64>,

    /// Count repeated replies from one target as late duplicates.
    #[arg(long)]
    pub dedup: bool,

    /// Fixed interface identifier for every target (address or integer).
    #[arg(long, value_name = "ID", conflicts_with_all = ["identifier_pattern", "random_identifier"])]
    pub identifier: Option<String>,

    /// Comma-separated identifiers; each enumerated address is probed with every one.
    #[arg(long, value_name = "IDS", conflicts_with = "random_identifier")]
    pub identifier_pattern: Option<String>,

    /// Pseudorandom identifier per enumerated address.
    #[arg(long)]
    pub random_identifier: bool,

    /// UDP probe payload (text).
    #[arg(long, value_name = "TEXT")]
    pub udp_payload: Option<String>,

    /// DNS question name.
    #[arg(long, value_name = "NAME")]
    pub dns_qname: Option<String>,

    /// DNS question type: A, AAAA or a number.
    #[arg(long, value_name = "TYPE")]
    pub dns_qtype: Option<String>,

    /// Ask for `version.bind` (CHAOS TXT) instead.
    #[arg(long)]
    pub dns_version_bind: bool,

    /// Carry a send timestamp in ICMP echo payloads.
    #[arg(long)]
    pub icmp_timestamp: bool,

    /// More log output (repeatable).
    #[arg(short = 'v', long, action = ArgAction::Count)]
    pub verbose: u8,

    /// No preamble, progress or summary.
    #[arg(short = 'q', long, conflicts_with = "verbose")]
    pub quiet: bool,

    /// Print the manual page (roff) and exit.
    #[arg(long, hide = true)]
    pub man: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn cfg_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Everything derived from the flags that the scan needs.
pub struct Plan {
    pub config: ScanConfig,
    pub seed_generated: bool,
    pub simulate: Option<Vec<hexmap::sim::ResponderRule>>,
}

fn read(path: &str) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| cfg_err(format!("cannot read {path}: {e}")))
}

/// Keeps only the lines of a prefix list that belong to `family`, so one
/// list can serve both IPv4 and IPv6 scans.
fn lines_for(text: &str, family: Family) -> String {
    text.lines()
        .map(|line| {
            let entry = line.split('#').next().unwrap_or("").trim();
            let is_v6 = entry.contains(':');
            if entry.is_empty() || is_v6 == (family == Family::V6) {
                line
            } else {
                ""
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_shard(text: &str) -> Result<Shard, ConfigError> {
    let bad = || cfg_err(format!("bad shard `{text}`, expected I/N"));
    let (i, n) = text.split_once('/').ok_or_else(bad)?;
    let i = i.trim().parse().map_err(|_| bad())?;
    let n = n.trim().parse().map_err(|_| bad())?;
    Shard::new(i, n).map_err(|e| cfg_err(e.to_string()))
}

fn parse_qtype(text: &str) -> Result<u16, ConfigError> {
    match text.to_ascii_uppercase().as_str() {
        "A" => Ok(hexmap::codecs::dns::QTYPE_A),
        "AAAA" => Ok(hexmap::codecs::dns::QTYPE_AAAA),
        other => other
            .parse()
            .map_err(|_| cfg_err(format!("unknown DNS query type `{text}`"))),
    }
}

fn family_of(args: &Args) -> Result<Family, ConfigError> {
    if args.ipv4 {
        return Ok(Family::V4);
    }
    if args.ipv6 {
        return Ok(Family::V6);
    }
    let first = args.targets.first().ok_or_else(|| cfg_err("no targets"))?;
    Ok(if first.contains(':') { Family::V6 } else { Family::V4 })
}

fn mac(text: &str) -> Result<[u8; 6], ConfigError> {
    let mut out = [0u8; 6];
    let parts: Vec<&str> = text.split([':', '-']).collect();
    if parts.len() != 6 {
        return Err(cfg_err(format!("bad MAC address `{text}`")));
    }
    for (b, p) in out.iter_mut().zip(parts) {
        *b = u8::from_str_radix(p, 16).map_err(|_| cfg_err(format!("bad MAC address `{text}`")))?;
    }
    Ok(out)
}

fn template(args: &Args, family: Family) -> Result<FrameTemplate, ConfigError> {
    let offline = args.dry_run || args.simulate.is_some();
    let (mut src_mac, mut dst_mac, mut src_ip) = (None, None, args.source_ip);
    if let Some(iface) = &args.interface {
        #[cfg(target_os = "linux")]
        {
            let info = hexmap::transport::interface_info(iface)
                .map_err(|e| cfg_err(format!("interface {iface}: {e}")))?;
            src_mac = info.mac;
            dst_mac = info.gateway_mac;
            if src_ip.is_none() {
                src_ip = match family {
                    Family::V4 => info.ipv4.map(IpAddr::V4),
                    Family::V6 => info.ipv6.map(IpAddr::V6),
                };
            }
        }
        #[cfg(not(target_os = "linux"))]
        return Err(cfg_err(format!("live scans on {iface} need Linux")));
    } else if !offline {
        return Err(cfg_err("live scans need --interface (or use --dry-run / --simulate)"));
    }
    if let Some(m) = &args.source_mac {
        src_mac = Some(mac(m)?);
    }
    if let Some(m) = &args.gateway_mac {
        dst_mac = Some(mac(m)?);
    }
    // documentation addresses keep offline runs self-contained
    let src_ip = match src_ip {
        Some(ip) => ip,
        None if offline => match family {
            Family::V4 => "192.0.2.1".parse().unwrap(),
            Family::V6 => "2001:db8::1".parse().unwrap(),
        },
        None => return Err(cfg_err(format!("no {family} source address; pass --source-ip"))),
    };
    if Family::of(src_ip) != family {
        return Err(cfg_err(format!("source address {src_ip} is not {family}")));
    }
    let src_mac = match src_mac {
        Some(m) => m,
        None if offline => [0x02, 0, 0, 0, 0, 0x01],
        None => return Err(cfg_err("unknown source MAC; pass --source-mac")),
    };
    let dst_mac = match dst_mac {
        Some(m) => m,
        None if offline => [0x02, 0, 0, 0, 0, 0x02],
        None => return Err(cfg_err("unknown gateway MAC; pass --gateway-mac")),
    };
    Ok(FrameTemplate::new(src_mac, dst_mac, src_ip, args.ttl))
}

fn targets(args: &Args, family: Family) -> Result<Vec<TargetSpec>, ConfigError> {
    let ports = args
        .ports
        .as_deref()
        .map(parse_ports)
        .transpose()
        .map_err(|e| cfg_err(e.to_string()))?;
    let identifier = if let Some(id) = &args.identifier {
        Some(IdentifierSpec::Fixed(parse_identifier(id, family).map_err(|e| cfg_err(e.to_string()))?))
    } else if let Some(list) = &args.identifier_pattern {
        let ids = list
            .split(',')
            .map(|t| parse_identifier(t, family))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| cfg_err(e.to_string()))?;
        Some(IdentifierSpec::Pattern(ids))
    } else {
        None
    };
    args.targets
        .iter()
        .map(|expr| {
            let mut spec = parse_target(expr, family).map_err(|e| cfg_err(format!("target `{expr}`: {e}")))?;
            if let Some(ports) = &ports {
                spec = spec.with_ports(ports.clone());
            }
            let id = match (&identifier, args.random_identifier) {
                (Some(id), _) => Some(id.clone()),
                (None, true) => Some(IdentifierSpec::Random { seed: 0 }),
                (None, false) => None,
            };
            if let Some(id) = id {
                spec = spec
                    .with_identifier(id)
                    .map_err(|e| cfg_err(format!("target `{expr}`: {e}")))?;
            }
            Ok(spec)
        })
        .collect()
}

fn filter(args: &Args, family: Family) -> Result<PrefixFilter, ConfigError> {
    let mut filter = PrefixFilter::new();
    for (path, action) in [(&args.allowlist, Action::Allow), (&args.blocklist, Action::Block)] {
        if let Some(path) = path {
            filter
                .load(&lines_for(&read(path)?, family), action)
                .map_err(|e| cfg_err(format!("{path}: {e}")))?;
        }
    }
    Ok(filter)
}

/// Maps parsed flags to a scan configuration. Touches the filesystem only
/// to read list files and interface details.
pub fn plan(args: &Args) -> Result<Plan, ConfigError> {
    let family = family_of(args)?;
    let (seed, seed_generated) = match args.seed {
        Some(s) => (s, false),
        None => (rand::random(), true),
    };
    let mut targets = targets(args, family)?;
    if args.random_identifier {
        targets = targets
            .into_iter()
            .map(|t| t.with_identifier(IdentifierSpec::Random { seed }))
            .collect::<Result<_, _>>()
            .map_err(|e| cfg_err(e.to_string()))?;
    }
    let opts = ProbeOptions {
        udp_payload: args.udp_payload.clone().unwrap_or_default().into_bytes(),
        dns_qname: args.dns_qname.clone(),
        dns_qtype: args.dns_qtype.as_deref().map(parse_qtype).transpose()?,
        dns_version_bind: args.dns_version_bind,
        icmp_timestamp: args.icmp_timestamp,
    };
    let probe = module_by_name(&args.probe_module, family, &opts).map_err(|e| cfg_err(e.to_string()))?;
    let mut config = ScanConfig::new(targets, Arc::from(probe), template(args, family)?);
    config.seed = seed;
    config.rate = match (&args.bandwidth, args.rate) {
        (Some(b), _) => RatePolicy::bps(parse_bandwidth(b).map_err(|e| cfg_err(e.to_string()))?),
        (None, Some(0)) => RatePolicy::unlimited(),
        (None, Some(pps)) => RatePolicy::pps(pps),
        (None, None) => config.rate,
    };
    if let Some(batch) = args.batch {
        if batch == 0 {
            return Err(cfg_err("--batch must be positive"));
        }
        config.rate = config.rate.with_batch(batch);
    }
    if let Some(s) = &args.shard {
        config.shard = parse_shard(s)?;
    }
    config.sender_threads = args.sender_threads;
    config.cooldown = Duration::from_secs(args.cooldown);
    config.dry_run = args.dry_run;
    config.max_results = args.max_results;
    config.max_runtime = args.max_runtime.map(Duration::from_secs);
    config.filter = Arc::new(filter(args, family)?);
    config.dedup = args.dedup;
    config.output_all = args.output_all;
    config.validate().map_err(|e| cfg_err(e.to_string()))?;
    let simulate = args
        .simulate
        .as_deref()
        .map(|path| parse_rules(&read(path)?).map_err(|e| cfg_err(format!("{path}: {e}"))))
        .transpose()?;
    Ok(Plan {
        config,
        seed_generated,
        simulate,
    })
}

/// Digits grouped by thousands: 4294967296 → 4,294,967,296.
pub fn group_digits(n: &BigUint) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Human-readable preamble: sizes, exclusions, duration estimate and seed.
pub fn echo_config(config: &ScanConfig, seed_generated: bool) -> String {
    let mut out = String::new();
    if config.dry_run {
        out.push_str("*** DRY RUN: probes are written to the output, nothing is sent ***\n");
    }
    let targets = config.effective_targets();
    let total: BigUint = targets.iter().map(TargetSpec::space_size).sum();
    let effective = effective_size(&targets, &config.filter);
    for t in &targets {
        let ports = if t.ports().is_sentinel() {
            String::new()
        } else {
            format!(" × {} port{}", t.ports().len(), if t.ports().len() == 1 { "" } else { "s" })
        };
        let _ = writeln!(out, "target {t}: {} addresses{ports}", group_digits(&t.address_count()));
    }
    let excluded = &total - &effective;
    let _ = writeln!(
        out,
        "probe space {} ({} excluded by allow/block lists)",
        group_digits(&total),
        group_digits(&excluded)
    );
    let mut share = effective.clone();
    if config.shard.count() > 1 {
        share = config.shard.quota(&effective);
        let _ = writeln!(
            out,
            "shard {}/{}: {} probes",
            config.shard.index(),
            config.shard.count(),
            group_digits(&share)
        );
    }
    let frame = config.probe.frame_len(config.template.family()) as u64;
    let rate = match config.rate.effective_pps(frame) {
        Ok(Some(pps)) => {
            let secs = estimate_secs(&share, pps).map_or_else(|| "∞".into(), |s| group_digits(&BigUint::from(s)));
            let mode = match config.rate.mode {
                RateMode::Bps(bps) => format!("{bps} bit/s ≈ {pps} pps"),
                _ => format!("{pps} pps"),
            };
            format!("{mode}, estimated {secs} s")
        }
        Ok(None) => "unlimited rate, no estimate".to_string(),
        Err(e) => e.to_string(),
    };
    let _ = writeln!(out, "probe module {}, {rate}", config.probe.name());
    let origin = if seed_generated { "generated" } else { "given" };
    let _ = writeln!(
        out,
        "seed {} ({origin}; pass --seed {} to reproduce)",
        config.seed, config.seed
    );
    out
}

fn summary(stats: &ScanStats) -> String {
    let r = &stats.rejected;
    format!(
        "sent {} recv {} hits {} (successes {}) rejected {} [bad_token {} unparseable {} foreign_port {} late_duplicate {}] \
         send_errors {} duration {:.3} s",
        stats.sent,
        stats.recv,
        stats.hits,
        stats.successes,
        r.total(),
        r.bad_token,
        r.unparseable,
        r.foreign_port,
        r.late_duplicate,
        stats.send_errors,
        stats.duration().as_secs_f64()
    )
}

fn progress_line(p: &ProgressReport) -> String {
    let eta = p
        .eta
        .map_or_else(|| "--".to_string(), |d| format!("{} s", d.as_secs()));
    format!(
        "{:5.1}% sent {} ({:.0} p/s) hits {} eta {eta}",
        p.percent, p.sent, p.pps, p.hits
    )
}

/// Opens the live transport, failing fast without privileges.
fn live_transport(iface: &str) -> Result<Box<dyn Transport>, std::io::Error> {
    #[cfg(target_os = "linux")]
    {
        Ok(Box::new(hexmap::transport::RawTransport::open(iface)?))
    }
    #[cfg(not(target_os = "linux"))]
    {
        let _ = iface;
        Err(std::io::Error::new(std::io::ErrorKind::Unsupported, "raw sockets need Linux"))
    }
}

/// Runs the tool on `argv` and returns the process exit code. Diagnostics
/// go to `stderr`; results go to the configured output.
pub fn run<I, T>(argv: I, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    if args.man {
        let man = clap_mangen::Man::new(Args::command());
        let mut buf = Vec::new();
        return match man.render(&mut buf).and_then(|_| std::io::stdout().write_all(&buf)) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "hexmap: {e}");
                EXIT_RUNTIME
            }
        };
    }
    if args.list_probe_modules {
        println!("{}", MODULE_NAMES.join("\n"));
        return EXIT_OK;
    }
    let level = match args.verbose {
        _ if args.quiet => log::LevelFilter::Error,
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    let plan = match plan(&args) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "hexmap: {e}");
            return EXIT_CONFIG;
        }
    };
    let fields = match args.output_fields.as_deref().map(parse_fields).transpose() {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(stderr, "hexmap: {e}");
            return EXIT_CONFIG;
        }
    };
    if !args.quiet {
        let _ = write!(stderr, "{}", echo_config(&plan.config, plan.seed_generated));
    }

    let (clock, transport): (Arc<dyn Clock>, Option<Box<dyn Transport>>) = if let Some(rules) = plan.simulate {
        let clock = Arc::new(SimClock::new());
        let net = SimNet::new(rules, plan.config.seed, clock.clone()).keep_frames(false);
        (clock, Some(Box::new(net)))
    } else if args.dry_run {
        (Arc::new(RealClock::new()), None)
    } else {
        let iface = args.interface.as_deref().unwrap_or_default();
        match live_transport(iface) {
            Ok(t) => (Arc::new(RealClock::new()), Some(t)),
            Err(e) => {
                let _ = writeln!(stderr, "hexmap: cannot open {iface}: {e}");
                return EXIT_RUNTIME;
            }
        }
    };
    let mut sink = match open_sink(args.output_format, fields, &args.output_file) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(stderr, "hexmap: {e}");
            return EXIT_CONFIG;
        }
    };

    let show_progress = !args.quiet && (args.verbose > 0 || std::io::stderr().is_terminal());
    let report = |p: &ProgressReport| eprintln!("{}", progress_line(p));
    let hook = show_progress.then_some((&report as &(dyn Fn(&ProgressReport) + Sync), Duration::from_secs(1)));
    let result = run_scan_with_progress(&plan.config, transport.as_deref(), sink.as_mut(), clock.as_ref(), hook);
    match result {
        Ok(stats) => {
            if !args.quiet {
                let _ = writeln!(stderr, "{}", summary(&stats));
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "hexmap: {e}");
            let code = match e {
                ScanError::Config(_) | ScanError::Rate(_) | ScanError::Permutation(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            };
            if let Some(stats) = e.partial_stats() {
                let _ = writeln!(stderr, "{}", summary(stats));
            }
            code
        }
    }
}

/// Estimated whole seconds to send `probes` at `pps`, rounded up.
pub fn estimate_secs(probes: &BigUint, pps: u64) -> Option<u64> {
    ((probes + BigUint::from(pps.max(1) - 1)) / BigUint::from(pps.max(1))).to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_lines_are_split_by_family() {
        let text = "10.0.0.0/8\n2001:db8::/32 # doc\n# comment\n192.0.2.0/24";
        assert_eq!(lines_for(text, Family::V4), "10.0.0.0/8\n\n# comment\n192.0.2.0/24");
        assert_eq!(lines_for(text, Family::V6), "\n2001:db8::/32 # doc\n# comment\n");
    }

    #[test]
    fn shard_and_mac_parsing() {
        assert_eq!(parse_shard("1/4").unwrap(), Shard::new(1, 4).unwrap());
        assert!(parse_shard("4/4").is_err());
        assert!(parse_shard("1").is_err());
        assert_eq!(mac("02-00-5e-00-53-01").unwrap(), [2, 0, 0x5e, 0, 0x53, 1]);
        assert!(mac("02:00").is_err());
    }

    #[test]
    fn qtype_names() {
        assert_eq!(parse_qtype("aaaa").unwrap(), 28);
        assert_eq!(parse_qtype("16").unwrap(), 16);
        assert!(parse_qtype("MX?").is_err());
    }
}
