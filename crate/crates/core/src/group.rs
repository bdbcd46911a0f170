//! Prime-order cyclic group used by the whole crate.
//!
//! The group is the order-q subgroup of the multiplicative group mod p,
//! with q prime and p = k*q + 1 prime. Elements are residues mod p,
//! exponents are residues mod q. Every element equals g1^k for exactly
//! one k in 0..q; that index is what the label codec works with.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Member of the order-q subgroup, as a residue in 1..p.
///
/// Values are only constructed through [`GroupParams`], so membership
/// holds by construction inside one group. Elements loaded from files
/// go through [`GroupParams::element`], which re-checks membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(u64);

impl GroupElement {
    pub fn residue(self) -> u64 {
        self.0
    }
}

/// Exponent residue in 0..q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(u64);

impl Exponent {
    pub fn value(self) -> u64 {
        self.0
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    let mut base = base % m;
    let mut acc = 1u64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the witness set below is exact for u64.
fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn next_prime_at_least(n: u64) -> u64 {
    let mut c = n.max(2);
    loop {
        if is_prime(c) {
            return c;
        }
        c += 1;
    }
}

const MODULUS_SEARCH_BOUND: u64 = 1 << 24;

/// Group description: (q, p, g1) plus the element-to-index table.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GroupParamsFile", into = "GroupParamsFile")]
pub struct GroupParams {
    q: u64,
    p: u64,
    g1: GroupElement,
    index_table: HashMap<u64, u64>,
}

#[derive(Serialize, Deserialize)]
struct GroupParamsFile {
    q: u64,
    p: u64,
    g1: u64,
}

impl TryFrom<GroupParamsFile> for GroupParams {
    type Error = Error;

    fn try_from(f: GroupParamsFile) -> Result<Self> {
        GroupParams::from_parts(f.q, f.p, f.g1)
    }
}

impl From<GroupParams> for GroupParamsFile {
    fn from(g: GroupParams) -> Self {
        GroupParamsFile { q: g.q, p: g.p, g1: g.g1.residue() }
    }
}

impl PartialEq for GroupParams {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.p == other.p && self.g1 == other.g1
    }
}

impl Eq for GroupParams {}

impl GroupParams {
    /// Picks the smallest valid group for at least `min_classes` labels:
    /// q is the smallest prime >= min_classes, p the smallest prime
    /// k*q + 1 with k >= 2, and g1 = w^((p-1)/q) for the smallest base
    /// w >= 2 whose power is not the identity. Fully deterministic.
    pub fn generate(min_classes: u64) -> Result<Self> {
        if min_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {min_classes}"
            )));
        }
        let q = next_prime_at_least(min_classes);
        let p;
        let mut k = 2u64;
        loop {
            let candidate = k
                .checked_mul(q)
                .and_then(|v| v.checked_add(1))
                .ok_or(Error::ParamSearchExhausted { q })?;
            if candidate > MODULUS_SEARCH_BOUND.saturating_mul(q) {
                return Err(Error::ParamSearchExhausted { q });
            }
            if is_prime(candidate) {
                p = candidate;
                break;
            }
            k += 1;
        }
        let cofactor = (p - 1) / q;
        let mut g1 = 0u64;
        for w in 2..p {
            let c = pow_mod(w, cofactor, p);
            if c != 1 {
                g1 = c;
                break;
            }
        }
        debug_assert!(g1 != 0, "some base below p must generate the subgroup");
        Self::from_parts(q, p, g1)
    }

    /// Builds a group from explicit (q, p, g1), validating primality,
    /// q | p-1, and that g1 generates an order-q subgroup.
    pub fn from_parts(q: u64, p: u64, g1: u64) -> Result<Self> {
        if q < 2 || !is_prime(q) {
            return Err(Error::Format(format!("q = {q} is not prime")));
        }
        if !is_prime(p) {
            return Err(Error::Format(format!("p = {p} is not prime")));
        }
        if !(p - 1).is_multiple_of(q) {
            return Err(Error::Format(format!("q = {q} does not divide p-1 = {}", p - 1)));
        }
        if g1 <= 1 || g1 >= p {
            return Err(Error::Format(format!("g1 = {g1} is not a valid generator mod {p}")));
        }
        if pow_mod(g1, q, p) != 1 {
            return Err(Error::Format(format!("g1 = {g1} does not have order {q} mod {p}")));
        }
        let mut index_table = HashMap::with_capacity(q as usize);
        let mut cur = 1u64;
        for k in 0..q {
            index_table.insert(cur, k);
            cur = mul_mod(cur, g1, p);
        }
        Ok(GroupParams { q, p, g1: GroupElement(g1), index_table })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn generator(&self) -> GroupElement {
        self.g1
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(1)
    }

    pub fn contains(&self, residue: u64) -> bool {
        self.index_table.contains_key(&residue)
    }

    /// Admits a residue as a group element, rejecting non-members.
    pub fn element(&self, residue: u64) -> Result<GroupElement> {
        if self.contains(residue) {
            Ok(GroupElement(residue))
        } else {
            Err(Error::NotInSubgroup { residue })
        }
    }

    /// The unique k in 0..q with g1^k = u.
    pub fn element_index(&self, u: GroupElement) -> Result<u64> {
        self.index_table
            .get(&u.0)
            .copied()
            .ok_or(Error::NotInSubgroup { residue: u.0 })
    }

    /// g1^k; k is reduced mod q first.
    pub fn index_element(&self, k: u64) -> GroupElement {
        GroupElement(pow_mod(self.g1.0, k % self.q, self.p))
    }

    pub fn mul(&self, a: GroupElement, b: GroupElement) -> GroupElement {
        GroupElement(mul_mod(a.0, b.0, self.p))
    }

    /// Inverse via Fermat: a^(p-2) mod p.
    pub fn inv(&self, a: GroupElement) -> GroupElement {
        GroupElement(pow_mod(a.0, self.p - 2, self.p))
    }

    pub fn div(&self, a: GroupElement, b: GroupElement) -> GroupElement {
        self.mul(a, self.inv(b))
    }

    pub fn pow(&self, base: GroupElement, e: Exponent) -> GroupElement {
        GroupElement(pow_mod(base.0, e.0, self.p))
    }

    /// Reduces an arbitrary integer into the exponent ring.
    pub fn exponent(&self, v: u64) -> Exponent {
        Exponent(v % self.q)
    }

    pub fn exp_add(&self, a: Exponent, b: Exponent) -> Exponent {
        Exponent((a.0 + b.0) % self.q)
    }

    pub fn exp_sub(&self, a: Exponent, b: Exponent) -> Exponent {
        Exponent((a.0 + self.q - b.0) % self.q)
    }

    pub fn exp_mul(&self, a: Exponent, b: Exponent) -> Exponent {
        Exponent(mul_mod(a.0, b.0, self.q))
    }

    /// Uniform draw from 0..q.
    pub fn sample_exponent<R: Rng + ?Sized>(&self, rng: &mut R) -> Exponent {
        Exponent(rng.random_range(0..self.q))
    }

    /// Uniform draw from 1..q.
    pub fn sample_nonzero_exponent<R: Rng + ?Sized>(&self, rng: &mut R) -> Exponent {
        Exponent(rng.random_range(1..self.q))
    }

    /// Uniform draw over the whole subgroup.
    pub fn sample_element<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        let k = rng.random_range(0..self.q);
        self.index_element(k)
    }
}
