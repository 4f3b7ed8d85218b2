//! Allowlist/blocklist enforcement by longest-prefix match.
//!
//! The longest matching prefix decides regardless of which list it came
//! from; the same prefix present in both lists blocks. Without an allowlist
//! everything unmatched is allowed, with one everything unmatched is blocked.

use num_bigint::BigUint;
use num_traits::Zero;

use crate::address::{low_mask, Family, IdentifierSpec, TargetSpec};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("line {line}: malformed prefix `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: {found} prefix in a list of {expected} prefixes")]
    MixedFamily {
        line: usize,
        expected: Family,
        found: Family,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Allow,
    Block,
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    child: [u32; 2],
    mark: Option<Action>,
}

impl Node {
    fn new() -> Self {
        Node {
            child: [NONE, NONE],
            mark: None,
        }
    }
}

/// Binary trie over address bits, MSB first. Frozen after loading and safe
/// to share between sender threads.
#[derive(Clone, Debug)]
pub struct PrefixFilter {
    family: Option<Family>,
    nodes: Vec<Node>,
    has_allowlist: bool,
    prefixes: usize,
}

impl Default for PrefixFilter {
    fn default() -> Self {
        PrefixFilter {
            family: None,
            nodes: vec![Node::new()],
            has_allowlist: false,
            prefixes: 0,
        }
    }
}

impl PrefixFilter {
    /// Filter that allows everything.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn family(&self) -> Option<Family> {
        self.family
    }

    /// Number of distinct prefixes inserted.
    pub fn len(&self) -> usize {
        self.prefixes
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes == 0
    }

    /// Policy for addresses no prefix matches.
    pub fn default_action(&self) -> Action {
        if self.has_allowlist {
            Action::Block
        } else {
            Action::Allow
        }
    }

    /// Inserts `bits/len`; host bits beyond `len` are ignored.
    pub fn insert(&mut self, family: Family, bits: u128, len: u32, action: Action) {
        let width = family.width();
        debug_assert!(len <= width);
        self.family.get_or_insert(family);
        if action == Action::Allow {
            self.has_allowlist = true;
        }
        let mut node = 0usize;
        for depth in 0..len {
            let bit = ((bits >> (width - 1 - depth)) & 1) as usize;
            let next = self.nodes[node].child[bit];
            node = if next == NONE {
                self.nodes.push(Node::new());
                let idx = self.nodes.len() - 1;
                self.nodes[node].child[bit] = idx as u32;
                idx
            } else {
                next as usize
            };
        }
        let mark = &mut self.nodes[node].mark;
        match (*mark, action) {
            (None, _) => {
                self.prefixes += 1;
                *mark = Some(action);
            }
            (Some(Action::Allow), Action::Block) => *mark = Some(Action::Block),
            _ => {}
        }
    }

    /// Reads one CIDR (or bare address) per line into the filter. `#` starts
    /// a comment; blank lines are skipped.
    pub fn load(&mut self, text: &str, action: Action) -> Result<(), FilterError> {
        if action == Action::Allow {
            self.has_allowlist = true;
        }
        let mut file_family = self.family;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let entry = raw.split('#').next().unwrap_or("").trim();
            if entry.is_empty() {
                continue;
            }
            let (family, bits, len) = parse_cidr(entry).ok_or_else(|| FilterError::Malformed {
                line,
                text: entry.to_string(),
            })?;
            match file_family {
                Some(expected) if expected != family => {
                    return Err(FilterError::MixedFamily {
                        line,
                        expected,
                        found: family,
                    })
                }
                _ => file_family = Some(family),
            }
            self.insert(family, bits, len, action);
        }
        Ok(())
    }

    /// Decision for right-aligned address bits of the filter's family.
    pub fn is_allowed_bits(&self, bits: u128, family: Family) -> bool {
        if self.family.is_some_and(|f| f != family) {
            return self.default_action() == Action::Allow;
        }
        let width = family.width();
        let mut decision = self.default_action();
        let mut node = 0usize;
        let mut depth = 0;
        loop {
            if let Some(mark) = self.nodes[node].mark {
                decision = mark;
            }
            if depth == width {
                break;
            }
            let bit = ((bits >> (width - 1 - depth)) & 1) as usize;
            let next = self.nodes[node].child[bit];
            if next == NONE {
                break;
            }
            node = next as usize;
            depth += 1;
        }
        decision == Action::Allow
    }

    pub fn is_allowed(&self, addr: std::net::IpAddr) -> bool {
        self.is_allowed_bits(crate::address::ip_bits(addr), Family::of(addr))
    }

    /// Deepest marked prefix length.
    fn max_depth(&self) -> u32 {
        fn walk(nodes: &[Node], node: usize, depth: u32) -> u32 {
            let mut best = if nodes[node].mark.is_some() { depth } else { 0 };
            for c in nodes[node].child {
                if c != NONE {
                    best = best.max(walk(nodes, c as usize, depth + 1));
                }
            }
            best
        }
        walk(&self.nodes, 0, 0)
    }

    /// Counts blocked addresses among `prefix ∥ (free bits [plen, rlo)) ∥ id`
    /// by walking the trie along fixed bits and branching on free ones.
    fn count_blocked(&self, spec: &TargetSpec, id: u128, free_lo: u32) -> BigUint {
        let width = spec.width();
        let fixed = spec.prefix_bits() | id;
        let plen = spec.prefix_len();
        let all = |depth: u32| -> BigUint {
            let free = free_lo.saturating_sub(depth.max(plen));
            BigUint::from(1u8) << free
        };
        let mut total = BigUint::zero();
        // (node, depth, decision so far)
        let mut stack = vec![(0usize, 0u32, self.default_action())];
        while let Some((node, depth, mut decision)) = stack.pop() {
            if let Some(mark) = self.nodes[node].mark {
                decision = mark;
            }
            let blocked = decision == Action::Block;
            if depth == width {
                if blocked {
                    total += 1u8;
                }
                continue;
            }
            let free = depth >= plen && depth < free_lo;
            let bits: &[usize] = if free {
                &[0, 1]
            } else if (fixed >> (width - 1 - depth)) & 1 == 1 {
                &[1]
            } else {
                &[0]
            };
            for &bit in bits {
                let next = self.nodes[node].child[bit];
                if next == NONE {
                    if blocked {
                        total += all(depth + 1);
                    }
                } else {
                    stack.push((next as usize, depth + 1, decision));
                }
            }
        }
        total
    }

    /// Number of composed addresses of `spec` (indices × identifier choices,
    /// ports not counted) this filter rejects, without enumerating the space.
    pub fn count_excluded(&self, spec: &TargetSpec) -> BigUint {
        if self.family.is_some_and(|f| f != spec.family()) {
            return if self.default_action() == Action::Allow {
                BigUint::zero()
            } else {
                spec.address_count()
            };
        }
        let rlo = spec.random_lo();
        match spec.identifier() {
            IdentifierSpec::Fixed(v) => self.count_blocked(spec, *v, rlo),
            IdentifierSpec::Pattern(values) => values
                .iter()
                .map(|&v| self.count_blocked(spec, v, rlo))
                .sum(),
            IdentifierSpec::Random { .. } => {
                if self.max_depth() <= rlo {
                    // identifier bits never reach a decision
                    self.count_blocked(spec, 0, rlo)
                } else if spec.random_width() <= ENUMERATION_LIMIT {
                    self.enumerate_blocked(spec)
                } else {
                    // Identifier bits are pseudorandom per index; count them as
                    // free and take the expected share.
                    self.count_blocked(spec, 0, spec.width()) >> spec.identifier_width()
                }
            }
        }
    }

    fn enumerate_blocked(&self, spec: &TargetSpec) -> BigUint {
        let family = spec.family();
        let count = (0..=low_mask(spec.random_width()))
            .filter(|&i| {
                let addr = spec.compose(i, 0).expect("index in range");
                !self.is_allowed_bits(addr, family)
            })
            .count();
        BigUint::from(count)
    }
}

/// Random-identifier specs with at most this many randomized bits are
/// counted exactly by enumeration when the filter reaches identifier bits.
const ENUMERATION_LIMIT: u32 = 24;

fn parse_cidr(entry: &str) -> Option<(Family, u128, u32)> {
    let (addr_text, len_text) = match entry.split_once('/') {
        Some((a, l)) => (a, Some(l)),
        None => (entry, None),
    };
    let addr: std::net::IpAddr = addr_text.trim().parse().ok()?;
    let family = Family::of(addr);
    let len = match len_text {
        Some(l) => l.trim().parse::<u32>().ok()?,
        None => family.width(),
    };
    if len > family.width() {
        return None;
    }
    Some((family, crate::address::ip_bits(addr), len))
}

/// Parses a prefix list into a new filter.
pub fn load_prefixes(text: &str, action: Action) -> Result<PrefixFilter, FilterError> {
    let mut filter = PrefixFilter::new();
    filter.load(text, action)?;
    Ok(filter)
}
