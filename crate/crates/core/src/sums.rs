//! Closed forms for `Σ k^l t^k` over arithmetic progressions of integers.
//!
//! The infinite moments `S_i(u) = Σ_{j≥0} j^i u^j` are obtained by applying
//! `u·d/du` to `1/(1-u)`, which keeps them as `N_i(u)/(1-u)^{i+1}` with an
//! explicit numerator polynomial. Finite ranges are differences of two such
//! tails; the ratio-one case falls back to Faulhaber polynomials.

use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::padic::Rational;

/// `Σ k^l · t^k` over `k ≡ residue (mod modulus)`, `k_min ≤ k ≤ k_max`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgressionSum {
    pub l: u32,
    pub ratio: Rational,
    pub residue: i64,
    pub modulus: i64,
    pub k_min: i64,
    /// `None` for an unbounded range.
    pub k_max: Option<i64>,
}

impl ProgressionSum {
    pub fn is_convergent(&self) -> bool {
        self.k_max.is_some() || self.ratio.abs() < Rational::one()
    }

    /// First term of the progression at or above `k_min`.
    pub fn first_index(&self) -> i64 {
        let n = self.modulus;
        self.k_min + (self.residue - self.k_min).rem_euclid(n)
    }
}

pub fn binomial(n: u32, k: u32) -> Rational {
    if k > n {
        return Rational::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    Rational::from_integer(acc)
}

fn int_pow(x: &Rational, e: i64) -> Rational {
    if e >= 0 {
        num_traits::pow(x.clone(), e as usize)
    } else {
        num_traits::pow(x.recip(), (-e) as usize)
    }
}

/// Evaluates a coefficient vector at `x`.
pub fn eval_poly(coeffs: &[Rational], x: &Rational) -> Rational {
    coeffs
        .iter()
        .rev()
        .fold(Rational::zero(), |acc, c| acc * x + c)
}

fn eulerian_cache() -> &'static Mutex<Vec<Vec<Rational>>> {
    static CACHE: OnceLock<Mutex<Vec<Vec<Rational>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(vec![vec![Rational::one()]]))
}

/// Numerator `N_i(u)` with `Σ_{j≥0} j^i u^j = N_i(u) / (1-u)^{i+1}`.
pub fn moment_numerator(i: u32) -> Vec<Rational> {
    let mut cache = eulerian_cache().lock().unwrap();
    while cache.len() <= i as usize {
        let k = cache.len() - 1;
        let prev = &cache[k];
        // N_{k+1} = u·[(1-u)·N_k' + (k+1)·N_k]
        let deriv: Vec<Rational> = prev
            .iter()
            .enumerate()
            .skip(1)
            .map(|(d, c)| c * Rational::from_integer(d.into()))
            .collect();
        let mut inner = vec![Rational::zero(); prev.len() + 1];
        for (d, c) in deriv.iter().enumerate() {
            inner[d] += c;
            inner[d + 1] -= c;
        }
        for (d, c) in prev.iter().enumerate() {
            inner[d] += c * Rational::from_integer((k + 1).into());
        }
        let mut next = vec![Rational::zero()];
        next.extend(inner);
        while next.last().is_some_and(Zero::is_zero) {
            next.pop();
        }
        cache.push(next);
    }
    cache[i as usize].clone()
}

/// `Σ_{j≥0} j^i u^j` as the rational function value; an identity of rational
/// functions, so it is meaningful for every `u ≠ 1`.
pub fn moment(i: u32, u: &Rational) -> Rational {
    let one_minus = Rational::one() - u;
    assert!(!one_minus.is_zero(), "moment at u = 1");
    eval_poly(&moment_numerator(i), u) / int_pow(&one_minus, i as i64 + 1)
}

fn bernoulli(m: usize) -> Vec<Rational> {
    let mut b = vec![Rational::one()];
    for k in 1..=m {
        let mut acc = Rational::zero();
        for (j, bj) in b.iter().enumerate() {
            acc += binomial(k as u32 + 1, j as u32) * bj;
        }
        b.push(-acc / Rational::from_integer((k + 1).into()));
    }
    b
}

/// Coefficients of `F_e(J) = Σ_{j=0}^{J} j^e` as a polynomial in `J`
/// (with `0^0 = 1`). `F_e(J) - F_e(J-1) = J^e` holds for all integers.
pub fn faulhaber(e: u32) -> Vec<Rational> {
    let b = bernoulli(e as usize);
    let mut coeffs = vec![Rational::zero(); e as usize + 2];
    let scale = Rational::from_integer((e + 1).into()).recip();
    for k in 0..=e {
        let mut bk = b[k as usize].clone();
        if k == 1 {
            bk = -bk;
        }
        coeffs[(e + 1 - k) as usize] += &scale * binomial(e + 1, k) * bk;
    }
    if e == 0 {
        coeffs[0] += Rational::one();
    }
    coeffs
}

/// Coefficients in `a` of `Σ_{i≥0} (a + step·i)^l w^i`, for `w ≠ 1`.
pub fn tail_polynomial(l: u32, step: &Rational, w: &Rational) -> Vec<Rational> {
    let mut coeffs = vec![Rational::zero(); l as usize + 1];
    for e in 0..=l {
        coeffs[(l - e) as usize] = binomial(l, e) * int_pow(step, e as i64) * moment(e, w);
    }
    coeffs
}

/// Coefficients in `J` of `Σ_{i=0}^{J} (a + step·i)^l` for fixed `a`.
pub fn flat_sum_polynomial(l: u32, a: &Rational, step: &Rational) -> Vec<Rational> {
    let mut coeffs = vec![Rational::zero(); l as usize + 2];
    for e in 0..=l {
        let scale = binomial(l, e) * int_pow(a, (l - e) as i64) * int_pow(step, e as i64);
        for (d, c) in faulhaber(e).iter().enumerate() {
            coeffs[d] += &scale * c;
        }
    }
    coeffs
}

/// `Σ_{j=j_min}^{j_max} (c0 + step·j)^l · w^j`, either bound possibly
/// unbounded. Infinite ranges require the terms to decay.
pub fn sum_affine(
    l: u32,
    c0: &Rational,
    step: &Rational,
    w: &Rational,
    j_min: Option<i64>,
    j_max: Option<i64>,
) -> Result<Rational> {
    let Some(j_min) = j_min else {
        let Some(j_max) = j_max else {
            return Err(Error::Divergent("two-sided infinite range".into()));
        };
        if w.is_zero() {
            return Err(Error::Divergent("zero ratio with negative indices".into()));
        }
        // j = -i
        return sum_affine(l, c0, &-step, &w.recip(), Some(-j_max), None);
    };
    if let Some(j_max) = j_max {
        if j_max < j_min {
            return Ok(Rational::zero());
        }
    }
    if w.is_zero() {
        if j_min > 0 || j_max.is_some_and(|m| m < 0) {
            return Ok(Rational::zero());
        }
        if j_min < 0 {
            return Err(Error::Divergent("zero ratio with negative indices".into()));
        }
        return Ok(int_pow(c0, l as i64));
    }
    let a0 = c0 + step * Rational::from_integer(j_min.into());
    let lead = int_pow(w, j_min);
    match j_max {
        None => {
            if w.abs() >= Rational::one() {
                return Err(Error::Divergent(format!("ratio {w} has |ratio| ≥ 1")));
            }
            Ok(lead * eval_poly(&tail_polynomial(l, step, w), &a0))
        }
        Some(j_max) => {
            let count = j_max - j_min; // J
            if w.is_one() {
                let f = flat_sum_polynomial(l, &a0, step);
                return Ok(lead * eval_poly(&f, &Rational::from_integer(count.into())));
            }
            let tail = tail_polynomial(l, step, w);
            let a1 = &a0 + step * Rational::from_integer((count + 1).into());
            let head = eval_poly(&tail, &a0) - int_pow(w, count + 1) * eval_poly(&tail, &a1);
            Ok(lead * head)
        }
    }
}

/// Exact value of a convergent progression sum.
pub fn sum_progression(s: &ProgressionSum) -> Result<Rational> {
    if s.modulus < 1 {
        return Err(Error::Divergent("modulus must be positive".into()));
    }
    if !s.is_convergent() {
        return Err(Error::Divergent(format!(
            "ratio {} with unbounded range",
            s.ratio
        )));
    }
    let k0 = s.first_index();
    let count = match s.k_max {
        Some(m) if m < k0 => return Ok(Rational::zero()),
        Some(m) => Some((m - k0).div_euclid(s.modulus)),
        None => None,
    };
    let n = Rational::from_integer(s.modulus.into());
    if s.ratio.is_zero() {
        // only k = 0 survives
        let hit = k0 <= 0 && (0 - k0) % s.modulus == 0 && s.k_max.is_none_or(|m| m >= 0);
        return Ok(if hit && s.l == 0 {
            Rational::one()
        } else {
            Rational::zero()
        });
    }
    let w = int_pow(&s.ratio, s.modulus);
    let inner = sum_affine(
        s.l,
        &Rational::from_integer(k0.into()),
        &n,
        &w,
        Some(0),
        count,
    )?;
    Ok(int_pow(&s.ratio, k0) * inner)
}
