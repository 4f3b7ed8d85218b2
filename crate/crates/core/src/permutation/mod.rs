//! Full-cycle permutation of `[0, n)` by iterated multiplication with a
//! primitive root modulo a prime `p > n`.
//!
//! Residues above `n` are skipped, so each of the `p − 1` cycle steps either
//! emits `residue − 1` or is discarded. The emitted sequence is split into
//! interleaved shards by position.

pub mod arith;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::keyed::hash_below;
pub use arith::FactorLimit;
use arith::{distinct_prime_factors, is_generator, is_prime, mul_mod, next_prime};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PermutationError {
    #[error("permutation space must contain at least one element")]
    EmptySpace,
    #[error(transparent)]
    Factor(#[from] FactorLimit),
    #[error("{0} is not prime")]
    NotPrime(BigUint),
    #[error("modulus {p} does not exceed the space size {n}")]
    ModulusTooSmall { p: BigUint, n: BigUint },
    #[error("{g} is not a primitive root modulo {p}")]
    NotGenerator { g: BigUint, p: BigUint },
    #[error("no primitive root modulo {0} found among seeded candidates")]
    NoGenerator(BigUint),
    #[error("start residue {0} is outside [1, p-1]")]
    BadStart(BigUint),
    #[error("shard {index} is out of range for {count} shards")]
    BadShard { index: u32, count: u32 },
}

/// Smallest prime strictly greater than `n`.
pub fn find_prime(n: &BigUint) -> BigUint {
    next_prime(n)
}

const GENERATOR_ATTEMPTS: u64 = 4096;

fn generator_with_factors(
    p: &BigUint,
    factors: &[BigUint],
    seed: u64,
) -> Result<BigUint, PermutationError> {
    let two = BigUint::from(2u32);
    if *p == two {
        return Ok(BigUint::one());
    }
    if *p == BigUint::from(3u32) {
        return Ok(two);
    }
    // candidates are drawn from [2, p-1]
    let span = p - &two;
    for attempt in 0..GENERATOR_ATTEMPTS {
        let candidate = hash_below(seed, b"generator", attempt, &span) + &two;
        if is_generator(&candidate, p, factors) {
            return Ok(candidate);
        }
    }
    Err(PermutationError::NoGenerator(p.clone()))
}

/// A primitive root modulo prime `p`, chosen deterministically from `seed`.
pub fn find_generator(p: &BigUint, seed: u64) -> Result<BigUint, PermutationError> {
    if !is_prime(p) {
        return Err(PermutationError::NotPrime(p.clone()));
    }
    let factors = distinct_prime_factors(&(p - 1u32))?;
    generator_with_factors(p, &factors, seed)
}

/// Immutable description of one permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleParams {
    n: BigUint,
    p: BigUint,
    g: BigUint,
    seed: u64,
    start: BigUint,
}

impl CycleParams {
    /// Builds the permutation of `[0, n)` for `seed`.
    ///
    /// The modulus is the smallest prime above `n` whose `p − 1` factors
    /// within the rho budget; in practice that is [`find_prime`]`(n)`.
    pub fn new(n: BigUint, seed: u64) -> Result<Self, PermutationError> {
        if n.is_zero() {
            return Err(PermutationError::EmptySpace);
        }
        let mut p = find_prime(&n);
        let factors = loop {
            match distinct_prime_factors(&(&p - 1u32)) {
                Ok(f) => break f,
                Err(limit) => {
                    log::warn!("{limit}; moving to the next prime modulus");
                    p = next_prime(&p);
                }
            }
        };
        let g = generator_with_factors(&p, &factors, seed)?;
        let start = hash_below(seed, b"start", 0, &(&p - 1u32)) + 1u32;
        Ok(CycleParams {
            n,
            p,
            g,
            seed,
            start,
        })
    }

    /// Builds a permutation from explicit parts, verifying every invariant.
    pub fn from_parts(
        n: BigUint,
        p: BigUint,
        g: BigUint,
        start: BigUint,
    ) -> Result<Self, PermutationError> {
        if n.is_zero() {
            return Err(PermutationError::EmptySpace);
        }
        if !is_prime(&p) {
            return Err(PermutationError::NotPrime(p));
        }
        if p <= n {
            return Err(PermutationError::ModulusTooSmall { p, n });
        }
        let factors = distinct_prime_factors(&(&p - 1u32))?;
        if !is_generator(&g, &p, &factors) {
            return Err(PermutationError::NotGenerator { g, p });
        }
        if start.is_zero() || start >= p {
            return Err(PermutationError::BadStart(start));
        }
        Ok(CycleParams {
            n,
            p,
            g,
            seed: 0,
            start,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn prime(&self) -> &BigUint {
        &self.p
    }

    pub fn generator(&self) -> &BigUint {
        &self.g
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn start(&self) -> &BigUint {
        &self.start
    }

    /// The whole permutation as a single shard.
    pub fn iter(&self) -> CycleState {
        shard_init(self, Shard::WHOLE)
    }
}

/// One of `count` interleaved sub-sequences of the cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shard {
    index: u32,
    count: u32,
}

impl Shard {
    pub const WHOLE: Shard = Shard { index: 0, count: 1 };

    pub fn new(index: u32, count: u32) -> Result<Self, PermutationError> {
        if count == 0 || index >= count {
            return Err(PermutationError::BadShard { index, count });
        }
        Ok(Shard { index, count })
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    /// Splits this shard further into `parts` interleaved sub-shards; the
    /// `part`-th result emits positions `index + count·part + count·parts·k`.
    pub fn subdivide(self, part: u32, parts: u32) -> Result<Shard, PermutationError> {
        if parts == 0 || part >= parts {
            return Err(PermutationError::BadShard {
                index: part,
                count: parts,
            });
        }
        let count = self
            .count
            .checked_mul(parts)
            .ok_or(PermutationError::BadShard {
                index: part,
                count: parts,
            })?;
        Shard::new(self.index + self.count * part, count)
    }

    /// Number of emitted positions `< n` congruent to `index` mod `count`.
    pub fn quota(&self, n: &BigUint) -> BigUint {
        let index = BigUint::from(self.index);
        if &index >= n {
            return BigUint::zero();
        }
        (n - index + BigUint::from(self.count - 1)) / BigUint::from(self.count)
    }
}

/// A permutation index as produced by the cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Index {
    Word(u64),
    Big(BigUint),
}

impl Index {
    pub fn to_u128(&self) -> Option<u128> {
        match self {
            Index::Word(v) => Some(*v as u128),
            Index::Big(b) => b.to_u128(),
        }
    }
}

impl From<Index> for BigUint {
    fn from(i: Index) -> BigUint {
        match i {
            Index::Word(v) => BigUint::from(v),
            Index::Big(b) => b,
        }
    }
}

#[derive(Clone, Debug)]
enum Walk {
    Word {
        n: u64,
        p: u64,
        g: u64,
        current: u64,
        position: u64,
        next_emit: u64,
        stride: u64,
        emitted: u64,
        quota: u64,
    },
    Big {
        n: BigUint,
        p: BigUint,
        g: BigUint,
        current: BigUint,
        position: BigUint,
        next_emit: BigUint,
        stride: BigUint,
        emitted: BigUint,
        quota: BigUint,
    },
}

/// Iterator position within one shard of a cycle. Owned by one thread.
#[derive(Clone, Debug)]
pub struct CycleState {
    shard: Shard,
    walk: Walk,
}

/// Positions the walk so that it emits exactly the cycle positions
/// `shard.index + k·shard.count`, stopping after the shard's quota.
pub fn shard_init(params: &CycleParams, shard: Shard) -> CycleState {
    let quota = shard.quota(&params.n);
    let walk = match (
        params.p.to_u64(),
        params.n.to_u64(),
        params.g.to_u64(),
        params.start.to_u64(),
        quota.to_u64(),
    ) {
        (Some(p), Some(n), Some(g), Some(current), Some(quota)) => Walk::Word {
            n,
            p,
            g,
            current,
            position: 0,
            next_emit: shard.index as u64,
            stride: shard.count as u64,
            emitted: 0,
            quota,
        },
        _ => Walk::Big {
            n: params.n.clone(),
            p: params.p.clone(),
            g: params.g.clone(),
            current: params.start.clone(),
            position: BigUint::zero(),
            next_emit: BigUint::from(shard.index),
            stride: BigUint::from(shard.count),
            emitted: BigUint::zero(),
            quota,
        },
    };
    CycleState { shard, walk }
}

impl CycleState {
    pub fn shard(&self) -> Shard {
        self.shard
    }

    pub fn quota(&self) -> BigUint {
        match &self.walk {
            Walk::Word { quota, .. } => BigUint::from(*quota),
            Walk::Big { quota, .. } => quota.clone(),
        }
    }

    pub fn emitted(&self) -> BigUint {
        match &self.walk {
            Walk::Word { emitted, .. } => BigUint::from(*emitted),
            Walk::Big { emitted, .. } => emitted.clone(),
        }
    }

    /// Current residue in `[1, p − 1]`.
    pub fn current(&self) -> BigUint {
        match &self.walk {
            Walk::Word { current, .. } => BigUint::from(*current),
            Walk::Big { current, .. } => current.clone(),
        }
    }

    /// Advances to the next index owned by this shard, or `None` once the
    /// quota is exhausted.
    pub fn next_index(&mut self) -> Option<Index> {
        match &mut self.walk {
            Walk::Word {
                n,
                p,
                g,
                current,
                position,
                next_emit,
                stride,
                emitted,
                quota,
            } => {
                if *emitted == *quota {
                    return None;
                }
                loop {
                    *current = mul_mod(*current, *g, *p);
                    if *current <= *n {
                        let pos = *position;
                        *position += 1;
                        if pos == *next_emit {
                            *next_emit += *stride;
                            *emitted += 1;
                            return Some(Index::Word(*current - 1));
                        }
                    }
                }
            }
            Walk::Big {
                n,
                p,
                g,
                current,
                position,
                next_emit,
                stride,
                emitted,
                quota,
            } => {
                if *emitted == *quota {
                    return None;
                }
                loop {
                    *current = (&*current * &*g) % &*p;
                    if *current <= *n {
                        let hit = *position == *next_emit;
                        *position += 1u32;
                        if hit {
                            *next_emit += &*stride;
                            *emitted += 1u32;
                            return Some(Index::Big(&*current - 1u32));
                        }
                    }
                }
            }
        }
    }
}

impl Iterator for CycleState {
    type Item = BigUint;

    fn next(&mut self) -> Option<BigUint> {
        self.next_index().map(BigUint::from)
    }
}
