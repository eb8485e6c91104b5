//! Exact arithmetic for Q_p at desk scale.
//!
//! Elements of Q_p that occur in the engine are rationals, so they are kept
//! as exact [`BigRational`]s together with the prime that fixes the
//! valuation. Truncated residues only appear when testing n-th power
//! membership of units, where a finite modulus decides the question.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// A rational prime. The residue field of Q_p has `p` elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prime(u32);

impl Prime {
    pub fn new(p: u64) -> Result<Prime> {
        if p < 2 || p > u32::MAX as u64 {
            return Err(Error::NotPrime(p));
        }
        let mut d = 2u64;
        while d * d <= p {
            if p.is_multiple_of(d) {
                return Err(Error::NotPrime(p));
            }
            d += 1;
        }
        Ok(Prime(p as u32))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn to_bigint(self) -> BigInt {
        BigInt::from(self.0)
    }

    /// `p^e` for any integer `e`, as an exact rational.
    pub fn power(self, e: i64) -> Rational {
        let base = Rational::from_integer(self.to_bigint());
        if e >= 0 {
            num_traits::pow(base, e as usize)
        } else {
            num_traits::pow(base.recip(), (-e) as usize)
        }
    }

    pub fn int_power(self, e: u32) -> BigInt {
        num_traits::pow(self.to_bigint(), e as usize)
    }

    /// `p^e` as a machine integer, if it fits.
    pub fn u64_power(self, e: u32) -> Option<u64> {
        (self.0 as u64).checked_pow(e)
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An integer or `+inf`. Houses `v(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtendedInt {
    Finite(i64),
    Infinity,
}

impl ExtendedInt {
    pub fn finite(self) -> Option<i64> {
        match self {
            ExtendedInt::Finite(n) => Some(n),
            ExtendedInt::Infinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == ExtendedInt::Infinity
    }
}

impl Add for ExtendedInt {
    type Output = ExtendedInt;

    fn add(self, rhs: ExtendedInt) -> ExtendedInt {
        match (self, rhs) {
            (ExtendedInt::Finite(a), ExtendedInt::Finite(b)) => ExtendedInt::Finite(a + b),
            _ => ExtendedInt::Infinity,
        }
    }
}

impl From<i64> for ExtendedInt {
    fn from(n: i64) -> Self {
        ExtendedInt::Finite(n)
    }
}

impl fmt::Display for ExtendedInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedInt::Finite(n) => write!(f, "{n}"),
            ExtendedInt::Infinity => f.write_str("inf"),
        }
    }
}

/// Exponent of `p` in a nonzero integer.
pub fn int_valuation(n: &BigInt, p: Prime) -> Option<u64> {
    if n.is_zero() {
        return None;
    }
    let pb = p.to_bigint();
    let mut m = n.abs();
    let mut v = 0;
    loop {
        let (q, r) = m.div_rem(&pb);
        if !r.is_zero() {
            return Some(v);
        }
        m = q;
        v += 1;
    }
}

/// p-adic valuation of a rational; `+inf` at zero.
pub fn valuation(x: &Rational, p: Prime) -> ExtendedInt {
    match int_valuation(x.numer(), p) {
        None => ExtendedInt::Infinity,
        Some(vn) => {
            let vd = int_valuation(x.denom(), p).unwrap_or(0);
            ExtendedInt::Finite(vn as i64 - vd as i64)
        }
    }
}

/// Finite valuation, or `Err` for zero.
pub fn finite_valuation(x: &Rational, p: Prime, op: &'static str) -> Result<i64> {
    valuation(x, p).finite().ok_or(Error::ZeroInput { op })
}

/// `|x| = p^{-v(x)}`, with `|0| = 0`.
pub fn norm(x: &Rational, p: Prime) -> Rational {
    match valuation(x, p) {
        ExtendedInt::Infinity => Rational::zero(),
        ExtendedInt::Finite(v) => p.power(-v),
    }
}

/// `x · p^{-v(x)}`.
pub fn unit_part(x: &Rational, p: Prime) -> Result<Rational> {
    let v = finite_valuation(x, p, "unit_part")?;
    Ok(x * p.power(-v))
}

/// `v_p(n)` for a positive machine integer.
pub fn small_valuation(n: u64, p: Prime) -> u32 {
    let mut m = n;
    let mut v = 0;
    while m != 0 && m.is_multiple_of(p.0 as u64) {
        m /= p.0 as u64;
        v += 1;
    }
    v
}

/// Precision `2·v_p(n) + 1` at which n-th power membership of a unit is
/// decided by its residue.
pub fn hensel_depth(p: Prime, n: u32) -> u32 {
    2 * small_valuation(n as u64, p) + 1
}

/// Reduction of a p-integral rational modulo `modulus` (a power of p).
/// Returns `None` when the rational has negative valuation.
pub fn residue(x: &Rational, modulus: &BigInt) -> Option<BigInt> {
    let den = x.denom();
    let inv = mod_inverse(&den.mod_floor(modulus), modulus)?;
    Some((x.numer().mod_floor(modulus) * inv).mod_floor(modulus))
}

pub fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    if m.is_one() {
        return Some(BigInt::zero());
    }
    let g = a.extended_gcd(m);
    if !g.gcd.is_one() {
        return None;
    }
    Some(g.x.mod_floor(m))
}

/// An element of Q_p given by an exact rational.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PAdicScalar {
    pub value: Rational,
    pub prime: Prime,
}

impl PAdicScalar {
    pub fn new(value: Rational, prime: Prime) -> Self {
        PAdicScalar { value, prime }
    }

    pub fn from_int(n: i64, prime: Prime) -> Self {
        PAdicScalar::new(int(n), prime)
    }

    pub fn valuation(&self) -> ExtendedInt {
        valuation(&self.value, self.prime)
    }

    pub fn norm(&self) -> Rational {
        norm(&self.value, self.prime)
    }

    pub fn unit_part(&self) -> Result<PAdicScalar> {
        Ok(PAdicScalar::new(unit_part(&self.value, self.prime)?, self.prime))
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    /// Field inverse with `0^{-1} = 0`.
    pub fn inverse(&self) -> PAdicScalar {
        if self.value.is_zero() {
            self.clone()
        } else {
            PAdicScalar::new(self.value.recip(), self.prime)
        }
    }
}

impl Add for &PAdicScalar {
    type Output = PAdicScalar;
    fn add(self, rhs: &PAdicScalar) -> PAdicScalar {
        assert_eq!(self.prime, rhs.prime, "mixed primes");
        PAdicScalar::new(&self.value + &rhs.value, self.prime)
    }
}

impl Sub for &PAdicScalar {
    type Output = PAdicScalar;
    fn sub(self, rhs: &PAdicScalar) -> PAdicScalar {
        assert_eq!(self.prime, rhs.prime, "mixed primes");
        PAdicScalar::new(&self.value - &rhs.value, self.prime)
    }
}

impl Mul for &PAdicScalar {
    type Output = PAdicScalar;
    fn mul(self, rhs: &PAdicScalar) -> PAdicScalar {
        assert_eq!(self.prime, rhs.prime, "mixed primes");
        PAdicScalar::new(&self.value * &rhs.value, self.prime)
    }
}

impl Neg for &PAdicScalar {
    type Output = PAdicScalar;
    fn neg(self) -> PAdicScalar {
        PAdicScalar::new(-&self.value, self.prime)
    }
}

impl fmt::Display for PAdicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

/// The coset `μ·P_n`, or `{0}` when `μ = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Coset {
    pub mu: Rational,
    pub n: u32,
}

impl Coset {
    pub fn new(mu: Rational, n: u32) -> Self {
        assert!(n >= 1, "coset modulus must be positive");
        Coset { mu, n }
    }

    /// `P_1 = Q_p^×`.
    pub fn units() -> Self {
        Coset::new(Rational::one(), 1)
    }

    pub fn point() -> Self {
        Coset::new(Rational::zero(), 1)
    }

    pub fn is_point(&self) -> bool {
        self.mu.is_zero()
    }
}

type PowerKey = (u32, u32, u32);

fn power_cache() -> &'static Mutex<HashMap<PowerKey, Arc<HashSet<u64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<PowerKey, Arc<HashSet<u64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Residues mod `p^e` of n-th powers of units. Memoized; fills are idempotent.
pub fn unit_power_residues(p: Prime, n: u32, e: u32) -> Arc<HashSet<u64>> {
    let key = (p.get(), n, e);
    if let Some(hit) = power_cache().lock().unwrap().get(&key) {
        return hit.clone();
    }
    let modulus = p.u64_power(e).expect("residue modulus overflows u64");
    let mut set = HashSet::new();
    for y in 1..modulus {
        if y % p.get() as u64 == 0 {
            continue;
        }
        set.insert(pow_mod(y, n as u64, modulus));
    }
    let set = Arc::new(set);
    power_cache()
        .lock()
        .unwrap()
        .entry(key)
        .or_insert_with(|| set.clone())
        .clone()
}

pub fn pow_mod(base: u64, mut exp: u64, modulus: u64) -> u64 {
    if modulus == 1 {
        return 0;
    }
    let m = modulus as u128;
    let mut b = base as u128 % m;
    let mut acc = 1u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

fn unit_is_nth_power_at(u: &Rational, p: Prime, n: u32, e: u32) -> bool {
    let modulus = p.int_power(e);
    let r = residue(u, &modulus).expect("unit is p-integral");
    let r = r.to_u64().expect("residue fits u64");
    unit_power_residues(p, n, e).contains(&r)
}

/// Membership `x ∈ μ·P_n`, deciding the n-th power question on residues
/// modulo `p^depth`.
pub fn in_coset(x: &Rational, coset: &Coset, p: Prime, depth: u32) -> Result<bool> {
    let required = hensel_depth(p, coset.n);
    if depth < required {
        return Err(Error::InsufficientDepth { depth, required });
    }
    if coset.mu.is_zero() {
        return Ok(x.is_zero());
    }
    if x.is_zero() {
        return Ok(false);
    }
    let quotient = x / &coset.mu;
    let v = finite_valuation(&quotient, p, "in_coset")?;
    if v.rem_euclid(coset.n as i64) != 0 {
        return Ok(false);
    }
    if coset.n == 1 {
        return Ok(true);
    }
    let u = &quotient * p.power(-v);
    let answer = unit_is_nth_power_at(&u, p, coset.n, depth);
    // Lift two more digits; a disagreement means the bound is wrong.
    let lifted = depth + 2;
    if p.u64_power(lifted).is_some_and(|m| m <= 1 << 20) {
        let check = unit_is_nth_power_at(&u, p, coset.n, lifted);
        if check != answer {
            return Err(Error::HenselSelfCheck { low: depth, high: lifted });
        }
    }
    Ok(answer)
}

/// [`in_coset`] at the Hensel-sufficient depth.
pub fn in_coset_default(x: &Rational, coset: &Coset, p: Prime) -> Result<bool> {
    in_coset(x, coset, p, hensel_depth(p, coset.n))
}

/// Canonical string form: `"n"` or `"n/d"`.
pub fn format_rational(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(Rational::new(n, d))
        }
        None => s.parse::<BigInt>().ok().map(Rational::from_integer),
    }
}
