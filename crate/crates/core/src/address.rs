//! Target address spaces.
//!
//! An address is split MSB-first into three regions: a fixed prefix
//! `[0, prefix_len)`, a randomized range `[prefix_len, random_lo)` that is
//! filled from a permutation index, and an identifier suffix
//! `[random_lo, width)` chosen by an [`IdentifierSpec`].
//!
//! Addresses are carried as right-aligned `u128` bit strings; IPv4 uses the
//! low 32 bits and every mask and shift is computed against the family width.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use num_bigint::BigUint;

use crate::keyed::sip128;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AddressError {
    #[error("malformed address `{0}`")]
    MalformedAddress(String),
    #[error("malformed prefix length in `{0}`")]
    MalformedLength(String),
    #[error("prefix length {prefix_len} exceeds randomization end {random_lo}")]
    PrefixAfterRange { prefix_len: u32, random_lo: u32 },
    #[error("bit position {bits} exceeds the {width}-bit address width")]
    RangeExceedsWidth { bits: u32, width: u32 },
    #[error("`{expr}` is not an {expected} target")]
    FamilyMismatch { expr: String, expected: Family },
    #[error("index {index} is outside the {width}-bit randomized range")]
    IndexOutOfRange { index: u128, width: u32 },
    #[error("identifier {value:#x} does not fit in {width} identifier bits")]
    IdentifierTooWide { value: u128, width: u32 },
    #[error("identifier pattern list is empty")]
    EmptyPattern,
    #[error("identifier pattern contains {0:#x} twice")]
    DuplicatePattern(u128),
    #[error("identifier choice {choice} is invalid (multiplicity {multiplicity})")]
    InvalidIdentifierChoice { choice: usize, multiplicity: usize },
    #[error("malformed port `{0}`")]
    MalformedPort(String),
    #[error("inverted port range {0}-{1}")]
    InvertedPortRange(u32, u32),
    #[error("port list is empty")]
    EmptyPorts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    V4,
    V6,
}

impl Family {
    pub const fn width(self) -> u32 {
        match self {
            Family::V4 => 32,
            Family::V6 => 128,
        }
    }

    pub fn of(addr: IpAddr) -> Family {
        match addr {
            IpAddr::V4(_) => Family::V4,
            IpAddr::V6(_) => Family::V6,
        }
    }

    /// Converts right-aligned address bits into an [`IpAddr`] of this family.
    pub fn to_ip(self, bits: u128) -> IpAddr {
        match self {
            Family::V4 => IpAddr::V4(Ipv4Addr::from(bits as u32)),
            Family::V6 => IpAddr::V6(Ipv6Addr::from(bits)),
        }
    }

    /// Parses a textual address and checks that it belongs to this family.
    pub fn parse_addr(self, text: &str) -> Result<u128, AddressError> {
        let addr = IpAddr::from_str(text.trim())
            .map_err(|_| AddressError::MalformedAddress(text.to_string()))?;
        if Family::of(addr) != self {
            return Err(AddressError::FamilyMismatch {
                expr: text.to_string(),
                expected: self,
            });
        }
        Ok(ip_bits(addr))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::V4 => "IPv4",
            Family::V6 => "IPv6",
        })
    }
}

pub fn ip_bits(addr: IpAddr) -> u128 {
    match addr {
        IpAddr::V4(a) => u32::from(a) as u128,
        IpAddr::V6(a) => u128::from(a),
    }
}

/// Mask with the low `bits` bits set.
pub(crate) const fn low_mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// Mask selecting the MSB-first bit range `[from, to)` of a `width`-bit address.
pub(crate) const fn range_mask(width: u32, from: u32, to: u32) -> u128 {
    if to <= from {
        return 0;
    }
    low_mask(to - from) << (width - to)
}

/// How the identifier suffix of each composed address is chosen.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IdentifierSpec {
    /// One value for every address.
    Fixed(u128),
    /// Each randomized index is combined with every listed suffix.
    Pattern(Vec<u128>),
    /// A pseudorandom suffix derived from the seed and the randomized index.
    Random { seed: u64 },
}

impl IdentifierSpec {
    /// Number of distinct identifiers combined with every randomized index.
    pub fn multiplicity(&self) -> usize {
        match self {
            IdentifierSpec::Pattern(values) => values.len(),
            _ => 1,
        }
    }

    fn validate(&self, width: u32) -> Result<(), AddressError> {
        let mask = low_mask(width);
        let check = |value: u128| {
            if value & !mask != 0 {
                Err(AddressError::IdentifierTooWide { value, width })
            } else {
                Ok(())
            }
        };
        match self {
            IdentifierSpec::Fixed(v) => check(*v),
            IdentifierSpec::Pattern(values) => {
                if values.is_empty() {
                    return Err(AddressError::EmptyPattern);
                }
                let mut seen = std::collections::HashSet::new();
                for &v in values {
                    check(v)?;
                    if !seen.insert(v) {
                        return Err(AddressError::DuplicatePattern(v));
                    }
                }
                Ok(())
            }
            IdentifierSpec::Random { .. } => Ok(()),
        }
    }
}

/// Sorted, duplicate-free list of destination ports.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PortSet(Vec<u16>);

impl PortSet {
    /// The singleton `{0}` used by probes that have no port dimension.
    pub fn sentinel() -> Self {
        PortSet(vec![0])
    }

    pub fn from_ports(ports: impl IntoIterator<Item = u16>) -> Result<Self, AddressError> {
        let mut v: Vec<u16> = ports.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(AddressError::EmptyPorts);
        }
        Ok(PortSet(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn get(&self, idx: usize) -> Option<u16> {
        self.0.get(idx).copied()
    }

    pub fn is_sentinel(&self) -> bool {
        self.0 == [0]
    }
}

impl fmt::Display for PortSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut i = 0;
        while i < self.0.len() {
            let start = self.0[i];
            let mut end = start;
            while i + 1 < self.0.len() && self.0[i + 1] == end.wrapping_add(1) {
                end = self.0[i + 1];
                i += 1;
            }
            if !first {
                f.write_str(",")?;
            }
            first = false;
            if start == end {
                write!(f, "{start}")?;
            } else {
                write!(f, "{start}-{end}")?;
            }
            i += 1;
        }
        Ok(())
    }
}

/// Parses a comma list of ports and inclusive ranges such as `80,443,8000-8002`.
pub fn parse_ports(expr: &str) -> Result<PortSet, AddressError> {
    fn port(text: &str) -> Result<u32, AddressError> {
        let t = text.trim();
        let v: u32 = t
            .parse()
            .map_err(|_| AddressError::MalformedPort(t.to_string()))?;
        if v > u16::MAX as u32 {
            return Err(AddressError::MalformedPort(t.to_string()));
        }
        Ok(v)
    }

    let mut ports = Vec::new();
    for item in expr.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        match item.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi) = (port(lo)?, port(hi)?);
                if lo > hi {
                    return Err(AddressError::InvertedPortRange(lo, hi));
                }
                ports.extend((lo..=hi).map(|p| p as u16));
            }
            None => ports.push(port(item)? as u16),
        }
    }
    PortSet::from_ports(ports)
}

/// One scan universe: fixed prefix, randomized range, identifier policy, ports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSpec {
    family: Family,
    base: u128,
    prefix_len: u32,
    random_lo: u32,
    identifier: IdentifierSpec,
    ports: PortSet,
}

impl TargetSpec {
    pub fn new(
        family: Family,
        base: u128,
        prefix_len: u32,
        random_lo: u32,
        identifier: IdentifierSpec,
        ports: PortSet,
    ) -> Result<Self, AddressError> {
        let width = family.width();
        if random_lo > width {
            return Err(AddressError::RangeExceedsWidth {
                bits: random_lo,
                width,
            });
        }
        if prefix_len > random_lo {
            return Err(AddressError::PrefixAfterRange {
                prefix_len,
                random_lo,
            });
        }
        if base & !low_mask(width) != 0 {
            return Err(AddressError::MalformedAddress(format!("{base:#x}")));
        }
        identifier.validate(width - random_lo)?;
        if ports.is_empty() {
            return Err(AddressError::EmptyPorts);
        }
        Ok(TargetSpec {
            family,
            base,
            prefix_len,
            random_lo,
            identifier,
            ports,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn width(&self) -> u32 {
        self.family.width()
    }

    pub fn base(&self) -> u128 {
        self.base
    }

    pub fn prefix_len(&self) -> u32 {
        self.prefix_len
    }

    /// Exclusive end of the fixed prefix, which is where randomization starts.
    pub fn random_hi(&self) -> u32 {
        self.prefix_len
    }

    pub fn random_lo(&self) -> u32 {
        self.random_lo
    }

    /// Width of the randomized range in bits.
    pub fn random_width(&self) -> u32 {
        self.random_lo - self.prefix_len
    }

    pub fn identifier_width(&self) -> u32 {
        self.width() - self.random_lo
    }

    pub fn identifier(&self) -> &IdentifierSpec {
        &self.identifier
    }

    pub fn ports(&self) -> &PortSet {
        &self.ports
    }

    pub fn with_identifier(mut self, identifier: IdentifierSpec) -> Result<Self, AddressError> {
        identifier.validate(self.identifier_width())?;
        self.identifier = identifier;
        Ok(self)
    }

    pub fn with_ports(mut self, ports: PortSet) -> Self {
        self.ports = ports;
        self
    }

    /// Number of distinct randomized indices, `2^w`.
    pub fn index_count(&self) -> BigUint {
        BigUint::from(1u8) << self.random_width()
    }

    /// Number of composed addresses, `2^w × identifier multiplicity`.
    pub fn address_count(&self) -> BigUint {
        self.index_count() * BigUint::from(self.identifier.multiplicity())
    }

    /// Number of (address, port) probe tuples.
    pub fn space_size(&self) -> BigUint {
        self.address_count() * BigUint::from(self.ports.len())
    }

    /// Bits of the fixed prefix as they appear in every composed address.
    pub fn prefix_bits(&self) -> u128 {
        self.base & range_mask(self.width(), 0, self.prefix_len)
    }

    /// The identifier value used with randomized index `index` and choice `id_choice`.
    pub fn identifier_value(&self, index: u128, id_choice: usize) -> Result<u128, AddressError> {
        let multiplicity = self.identifier.multiplicity();
        match &self.identifier {
            IdentifierSpec::Fixed(v) if id_choice == 0 => Ok(*v),
            IdentifierSpec::Pattern(values) if id_choice < values.len() => Ok(values[id_choice]),
            IdentifierSpec::Random { seed } if id_choice == 0 => {
                Ok(random_identifier(*seed, index) & low_mask(self.identifier_width()))
            }
            _ => Err(AddressError::InvalidIdentifierChoice {
                choice: id_choice,
                multiplicity,
            }),
        }
    }

    /// Builds `prefix ∥ index ∥ identifier` as right-aligned address bits.
    pub fn compose(&self, index: u128, id_choice: usize) -> Result<u128, AddressError> {
        let w = self.random_width();
        if index & !low_mask(w) != 0 {
            return Err(AddressError::IndexOutOfRange { index, width: w });
        }
        let id = self.identifier_value(index, id_choice)?;
        let shift = self.identifier_width();
        let placed = if w == 0 { 0 } else { index << shift };
        Ok(self.prefix_bits() | placed | id)
    }

    pub fn compose_ip(&self, index: u128, id_choice: usize) -> Result<IpAddr, AddressError> {
        self.compose(index, id_choice).map(|b| self.family.to_ip(b))
    }

    /// Inverse of [`compose`](Self::compose): recovers `(index, id_choice)` for
    /// an address inside this universe.
    pub fn decompose(&self, addr: u128) -> Option<(u128, usize)> {
        let width = self.width();
        if addr & range_mask(width, 0, self.prefix_len) != self.prefix_bits() {
            return None;
        }
        let shift = self.identifier_width();
        let index = if self.random_width() == 0 {
            0
        } else {
            (addr >> shift) & low_mask(self.random_width())
        };
        let id = addr & low_mask(shift);
        let choice = match &self.identifier {
            IdentifierSpec::Fixed(v) => (*v == id).then_some(0)?,
            IdentifierSpec::Pattern(values) => values.iter().position(|&v| v == id)?,
            IdentifierSpec::Random { seed } => {
                (random_identifier(*seed, index) & low_mask(shift) == id).then_some(0)?
            }
        };
        Some((index, choice))
    }

    pub fn contains(&self, addr: u128) -> bool {
        self.decompose(addr).is_some()
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}-{}",
            self.family.to_ip(self.base),
            self.prefix_len,
            self.random_lo
        )
    }
}

fn random_identifier(seed: u64, index: u128) -> u128 {
    sip128(seed, b"identifier", &[&index.to_le_bytes()])
}

/// Parses `ADDR`, `ADDR/PLEN` or `ADDR/PLEN-RLO`.
///
/// A missing `RLO` randomizes the whole host part; a missing `PLEN` names a
/// single address. The identifier defaults to the bits of `ADDR` below `RLO`
/// and the port set to the ICMP sentinel.
pub fn parse_target(expr: &str, family: Family) -> Result<TargetSpec, AddressError> {
    let expr = expr.trim();
    let width = family.width();
    let (addr_text, lens) = match expr.split_once('/') {
        Some((a, l)) => (a, Some(l)),
        None => (expr, None),
    };
    let base = family.parse_addr(addr_text).map_err(|e| match e {
        AddressError::FamilyMismatch { expected, .. } => AddressError::FamilyMismatch {
            expr: expr.to_string(),
            expected,
        },
        other => other,
    })?;
    let parse_len = |t: &str| -> Result<u32, AddressError> {
        t.trim()
            .parse::<u32>()
            .map_err(|_| AddressError::MalformedLength(expr.to_string()))
    };
    let (prefix_len, random_lo) = match lens {
        None => (width, width),
        Some(l) => match l.split_once('-') {
            Some((p, r)) => (parse_len(p)?, parse_len(r)?),
            None => (parse_len(l)?, width),
        },
    };
    if prefix_len > width {
        return Err(AddressError::RangeExceedsWidth {
            bits: prefix_len,
            width,
        });
    }
    if random_lo > width {
        return Err(AddressError::RangeExceedsWidth {
            bits: random_lo,
            width,
        });
    }
    if prefix_len > random_lo {
        return Err(AddressError::PrefixAfterRange {
            prefix_len,
            random_lo,
        });
    }
    let identifier = IdentifierSpec::Fixed(base & low_mask(width - random_lo));
    TargetSpec::new(
        family,
        base,
        prefix_len,
        random_lo,
        identifier,
        PortSet::sentinel(),
    )
}

/// Parses an identifier value given either as an address (`::1`, `0.0.0.1`)
/// or as a decimal / `0x` hexadecimal integer.
pub fn parse_identifier(text: &str, family: Family) -> Result<u128, AddressError> {
    let t = text.trim();
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        return u128::from_str_radix(hex, 16)
            .map_err(|_| AddressError::MalformedAddress(t.to_string()));
    }
    if let Ok(v) = t.parse::<u128>() {
        return Ok(v);
    }
    family.parse_addr(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v6(s: &str) -> u128 {
        u128::from(s.parse::<Ipv6Addr>().unwrap())
    }

    fn v4(s: &str) -> u128 {
        u32::from(s.parse::<Ipv4Addr>().unwrap()) as u128
    }

    /// Bit-at-a-time layout, independent of the mask/shift arithmetic above.
    fn slice_compose(width: u32, base: u128, plen: u32, rlo: u32, index: u128, id: u128) -> u128 {
        let mut out = 0u128;
        for pos in 0..width {
            let bit = if pos < plen {
                (base >> (width - 1 - pos)) & 1
            } else if pos < rlo {
                (index >> (rlo - 1 - pos)) & 1
            } else {
                (id >> (width - 1 - pos)) & 1
            };
            out |= bit << (width - 1 - pos);
        }
        out
    }

    #[test]
    fn parses_range_expressions() {
        let s = parse_target("2001:db8::/32-64", Family::V6).unwrap();
        assert_eq!((s.prefix_len(), s.random_lo(), s.random_width()), (32, 64, 32));
        let s = parse_target("192.168.0.1/16-20", Family::V4).unwrap();
        assert_eq!((s.prefix_len(), s.random_lo(), s.random_width()), (16, 20, 4));
        let s = parse_target("10.0.0.1/32", Family::V4).unwrap();
        assert_eq!(s.random_width(), 0);
        assert_eq!(s.space_size(), BigUint::from(1u8));
        let s = parse_target("10.0.0.0/8", Family::V4).unwrap();
        assert_eq!((s.prefix_len(), s.random_lo(), s.random_width()), (8, 32, 24));
        let s = parse_target("10.0.0.7", Family::V4).unwrap();
        assert_eq!((s.prefix_len(), s.random_lo()), (32, 32));
    }

    #[test]
    fn whole_host_part_matches_naive_listing() {
        // /30 analogue of 10.0.0.0/8: four addresses, in order.
        let s = parse_target("10.0.0.0/30", Family::V4).unwrap();
        let got: Vec<u128> = (0..4).map(|i| s.compose(i, 0).unwrap()).collect();
        let naive: Vec<u128> = (0..4).map(|i| v4("10.0.0.0") + i).collect();
        assert_eq!(got, naive);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_target("2001:db8::/64-32", Family::V6),
            Err(AddressError::PrefixAfterRange { .. })
        ));
        assert!(matches!(
            parse_target("10.0.0.0/8-33", Family::V4),
            Err(AddressError::RangeExceedsWidth { .. })
        ));
        assert!(matches!(
            parse_target("10.0.0.0/8", Family::V6),
            Err(AddressError::FamilyMismatch { .. })
        ));
        assert!(matches!(
            parse_target("10.0.0/8", Family::V4),
            Err(AddressError::MalformedAddress(_))
        ));
        assert!(matches!(
            parse_target("10.0.0.0/x", Family::V4),
            Err(AddressError::MalformedLength(_))
        ));
    }

    #[test]
    fn space_sizes() {
        let s = parse_target("2001:db8::/32-64", Family::V6).unwrap();
        assert_eq!(s.space_size(), BigUint::from(1u64 << 32));
        let s = parse_target("192.168.0.1/16-20", Family::V4)
            .unwrap()
            .with_ports(parse_ports("80,443,8080").unwrap());
        // brute force over (addr, port)
        let mut tuples = std::collections::HashSet::new();
        for i in 0..16u128 {
            for &p in s.ports().as_slice() {
                tuples.insert((s.compose(i, 0).unwrap(), p));
            }
        }
        assert_eq!(tuples.len(), 48);
        assert_eq!(s.space_size(), BigUint::from(48u8));
        let s = parse_target("2001:db8::1/128", Family::V6).unwrap();
        assert_eq!(s.space_size(), BigUint::from(1u8));
    }

    #[test]
    fn compose_examples() {
        let s = parse_target("2001:db8::/32-64", Family::V6)
            .unwrap()
            .with_identifier(IdentifierSpec::Fixed(1))
            .unwrap();
        let a = s.compose(1, 0).unwrap();
        assert_eq!(a, v6("2001:db8:0:1::1"));
        assert_eq!(a, slice_compose(128, v6("2001:db8::"), 32, 64, 1, 1));

        let s = parse_target("2001:db8::/32-64", Family::V6).unwrap();
        assert_eq!(s.compose(0, 0).unwrap(), v6("2001:db8::"));

        let s = parse_target("192.168.0.0/16-20", Family::V4).unwrap();
        let a = s.compose(0b1010, 0).unwrap();
        assert_eq!(a, v4("192.168.160.0"));
        assert_eq!(a, slice_compose(32, v4("192.168.0.0"), 16, 20, 0b1010, 0));
        assert!(matches!(
            s.compose(16, 0),
            Err(AddressError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn fixed_prefix_is_taken_from_base() {
        let s = parse_target("192.168.77.1/16-20", Family::V4).unwrap();
        // bits [20, 32) of the base (low nibble of 77, then .1) are the identifier
        assert_eq!(s.compose(0, 0).unwrap(), v4("192.168.13.1"));
        assert_eq!(s.compose(15, 0).unwrap(), v4("192.168.253.1"));
    }

    #[test]
    fn full_width_ranges() {
        let s = parse_target("::/0-128", Family::V6).unwrap();
        assert_eq!(s.random_width(), 128);
        assert_eq!(s.compose(u128::MAX, 0).unwrap(), u128::MAX);
        assert_eq!(s.space_size(), BigUint::from(1u8) << 128);
        let s = parse_target("0.0.0.0/0", Family::V4).unwrap();
        assert_eq!(s.compose(0xffff_ffff, 0).unwrap(), 0xffff_ffff);
        assert!(s.compose(1 << 32, 0).is_err());
    }

    #[test]
    fn pattern_identifiers() {
        let s = parse_target("2001:db8::/48-64", Family::V6)
            .unwrap()
            .with_identifier(IdentifierSpec::Pattern(vec![1, 2]))
            .unwrap();
        assert_eq!(s.address_count(), BigUint::from(2u32 << 16));
        assert_eq!(s.compose(3, 1).unwrap(), v6("2001:db8:0:3::2"));
        assert_eq!(s.decompose(v6("2001:db8:0:3::2")), Some((3, 1)));
        assert_eq!(s.decompose(v6("2001:db8:0:3::3")), None);
        assert!(s.compose(0, 2).is_err());
        assert_eq!(
            s.clone().with_identifier(IdentifierSpec::Pattern(vec![])),
            Err(AddressError::EmptyPattern)
        );
        assert_eq!(
            s.clone().with_identifier(IdentifierSpec::Pattern(vec![1, 1])),
            Err(AddressError::DuplicatePattern(1))
        );
    }

    #[test]
    fn identifier_must_fit() {
        let s = parse_target("192.168.0.0/16-24", Family::V4).unwrap();
        assert!(matches!(
            s.with_identifier(IdentifierSpec::Fixed(256)),
            Err(AddressError::IdentifierTooWide { .. })
        ));
    }

    #[test]
    fn random_identifiers_are_reproducible() {
        let s = parse_target("2001:db8::/48-64", Family::V6)
            .unwrap()
            .with_identifier(IdentifierSpec::Random { seed: 9 })
            .unwrap();
        let a = s.compose(5, 0).unwrap();
        assert_eq!(a, s.compose(5, 0).unwrap());
        assert_eq!(s.decompose(a), Some((5, 0)));
        assert_ne!(a & low_mask(64), s.compose(6, 0).unwrap() & low_mask(64));
    }

    #[test]
    fn port_parsing() {
        assert_eq!(
            parse_ports("80,443,8000-8002").unwrap().as_slice(),
            &[80, 443, 8000, 8001, 8002]
        );
        assert_eq!(parse_ports("53").unwrap().as_slice(), &[53]);
        // dedup oracle
        let expanded: std::collections::BTreeSet<u16> = [80u16, 80, 81].into_iter().collect();
        let expected: Vec<u16> = expanded.into_iter().collect();
        assert_eq!(parse_ports("80,80-81").unwrap().as_slice(), expected.as_slice());
        assert!(matches!(parse_ports("65536"), Err(AddressError::MalformedPort(_))));
        assert!(matches!(parse_ports("90-80"), Err(AddressError::InvertedPortRange(90, 80))));
        assert!(matches!(parse_ports(""), Err(AddressError::EmptyPorts)));
        assert!(matches!(parse_ports("http"), Err(AddressError::MalformedPort(_))));
        assert_eq!(parse_ports("1-3,7,9-10").unwrap().to_string(), "1-3,7,9-10");
    }

    #[test]
    fn identifier_values_parse_both_ways() {
        assert_eq!(parse_identifier("::1", Family::V6).unwrap(), 1);
        assert_eq!(parse_identifier("0x10", Family::V6).unwrap(), 16);
        assert_eq!(parse_identifier("0.0.1.2", Family::V4).unwrap(), 258);
        assert_eq!(parse_identifier("7", Family::V4).unwrap(), 7);
    }
}
