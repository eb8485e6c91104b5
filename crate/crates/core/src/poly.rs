//! Dense univariate polynomials over Q.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::expr::DTerm;
use crate::padic::{valuation, ExtendedInt, Prime, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UniPoly {
    /// `coeffs[i]` multiplies `t^i`; no trailing zeros.
    coeffs: Vec<Rational>,
}

impl UniPoly {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        UniPoly { coeffs }
    }

    pub fn constant(c: Rational) -> Self {
        UniPoly::new(vec![c])
    }

    pub fn from_ints(coeffs: &[i64]) -> Self {
        UniPoly::new(coeffs.iter().map(|&c| Rational::from_integer(c.into())).collect())
    }

    /// `t - r`.
    pub fn linear(r: &Rational) -> Self {
        UniPoly::new(vec![-r.clone(), Rational::one()])
    }

    /// Reads a term that is a polynomial in at most the variable `var`.
    pub fn from_dterm(t: &DTerm, var: usize) -> Option<Self> {
        let (v, coeffs) = t.as_univariate()?;
        match v {
            Some(i) if i != var => None,
            _ => Some(UniPoly::new(coeffs)),
        }
    }

    pub fn to_dterm(&self, var: usize) -> DTerm {
        DTerm::poly(self.coeffs.clone(), DTerm::Var(var)).normalize()
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with `-1` for the zero polynomial.
    pub fn degree(&self) -> i64 {
        self.coeffs.len() as i64 - 1
    }

    pub fn leading(&self) -> Rational {
        self.coeffs.last().cloned().unwrap_or_else(Rational::zero)
    }

    pub fn eval(&self, t: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    pub fn derivative(&self) -> UniPoly {
        UniPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * Rational::from_integer(i.into()))
                .collect(),
        )
    }

    /// Coefficients of `f(c + u)` in `u`.
    pub fn taylor_at(&self, c: &Rational) -> Vec<Rational> {
        let mut b = self.coeffs.clone();
        let n = b.len();
        // repeated synthetic division by (t - c)
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let carry = &b[j + 1] * c;
                b[j] += carry;
            }
        }
        b
    }

    pub fn scale(&self, c: &Rational) -> UniPoly {
        UniPoly::new(self.coeffs.iter().map(|x| x * c).collect())
    }

    pub fn add(&self, other: &UniPoly) -> UniPoly {
        UniPoly::new(crate::expr::poly_add(&self.coeffs, &other.coeffs))
    }

    pub fn sub(&self, other: &UniPoly) -> UniPoly {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn mul(&self, other: &UniPoly) -> UniPoly {
        UniPoly::new(crate::expr::poly_mul(&self.coeffs, &other.coeffs))
    }

    pub fn pow(&self, e: u32) -> UniPoly {
        let mut acc = UniPoly::constant(Rational::one());
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn div_rem(&self, divisor: &UniPoly) -> (UniPoly, UniPoly) {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        let mut rem = self.coeffs.clone();
        let dd = divisor.coeffs.len();
        if rem.len() < dd {
            return (UniPoly::new(vec![]), self.clone());
        }
        let lead = divisor.leading();
        let mut quot = vec![Rational::zero(); rem.len() - dd + 1];
        for k in (0..quot.len()).rev() {
            let q = &rem[k + dd - 1] / &lead;
            if q.is_zero() {
                continue;
            }
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= &q * d;
            }
            quot[k] = q;
        }
        (UniPoly::new(quot), UniPoly::new(rem))
    }

    pub fn monic(&self) -> UniPoly {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(&self.leading().recip())
    }

    pub fn gcd(&self, other: &UniPoly) -> UniPoly {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let r = a.div_rem(&b).1;
            a = b;
            b = r;
        }
        a.monic()
    }

    /// Yun's square-free decomposition: `f = c · Π s_i^i` with the `s_i`
    /// monic, square-free and pairwise coprime.
    pub fn squarefree_decomposition(&self) -> Vec<(UniPoly, u32)> {
        let mut out = Vec::new();
        if self.degree() < 1 {
            return out;
        }
        let a = self.monic();
        let mut c = a.gcd(&a.derivative());
        let mut w = a.div_rem(&c).0;
        let mut i = 1;
        while c.degree() > 0 {
            let y = w.gcd(&c);
            let z = w.div_rem(&y).0;
            if z.degree() > 0 {
                out.push((z.monic(), i));
            }
            i += 1;
            w = y;
            c = c.div_rem(&w).0;
        }
        if w.degree() > 0 {
            out.push((w.monic(), i));
        }
        out
    }

    pub fn squarefree_part(&self) -> UniPoly {
        self.squarefree_decomposition()
            .into_iter()
            .fold(UniPoly::constant(Rational::one()), |acc, (s, _)| acc.mul(&s))
    }

    /// Multiplicity of `r` as a root (0 if not a root).
    pub fn root_multiplicity(&self, r: &Rational) -> u32 {
        let mut m = 0;
        let mut f = self.clone();
        let lin = UniPoly::linear(r);
        while !f.is_zero() && f.eval(r).is_zero() {
            f = f.div_rem(&lin).0;
            m += 1;
        }
        m
    }

    /// All distinct rational roots, sorted.
    pub fn rational_roots(&self) -> Result<Vec<Rational>> {
        if self.is_zero() {
            return Err(Error::ZeroPolynomial);
        }
        let ints = self.integer_coefficients();
        let mut roots = Vec::new();
        let start = ints.iter().position(|c| !c.is_zero()).unwrap_or(0);
        if start > 0 {
            roots.push(Rational::zero());
        }
        let ints = &ints[start..];
        if ints.len() > 1 {
            let lows = divisors(&ints[0])?;
            let highs = divisors(ints.last().unwrap())?;
            let f = UniPoly::new(ints.iter().cloned().map(Rational::from_integer).collect());
            for d in &lows {
                for e in &highs {
                    for sign in [1, -1] {
                        let r = Rational::new(d * sign, e.clone());
                        if f.eval(&r).is_zero() && !roots.contains(&r) {
                            roots.push(r);
                        }
                    }
                }
            }
        }
        roots.sort();
        Ok(roots)
    }

    /// A positive integer multiple with integer coefficients.
    pub fn integer_coefficients(&self) -> Vec<BigInt> {
        let lcm = self
            .coeffs
            .iter()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        self.coeffs
            .iter()
            .map(|c| (c * Rational::from_integer(lcm.clone())).to_integer())
            .collect()
    }

    /// Minimum coefficient valuation.
    pub fn content_valuation(&self, p: Prime) -> ExtendedInt {
        self.coeffs
            .iter()
            .map(|c| valuation(c, p))
            .min()
            .unwrap_or(ExtendedInt::Infinity)
    }

    /// Rescaled by a power of `p` so the coefficients are p-integral with
    /// content valuation zero. Roots are unchanged.
    pub fn p_primitive(&self, p: Prime) -> UniPoly {
        match self.content_valuation(p) {
            ExtendedInt::Finite(v) => self.scale(&p.power(-v)),
            ExtendedInt::Infinity => self.clone(),
        }
    }
}

fn divisors(n: &BigInt) -> Result<Vec<BigInt>> {
    let n = n.abs();
    let small = n
        .to_u64()
        .filter(|&m| m <= 1u64 << 50)
        .ok_or_else(|| Error::Unsupported(format!("coefficient {n} too large for root search")))?;
    let mut out = Vec::new();
    let mut d = 1u64;
    while d * d <= small {
        if small % d == 0 {
            out.push(BigInt::from(d));
            if d * d != small {
                out.push(BigInt::from(small / d));
            }
        }
        d += 1;
    }
    Ok(out)
}

impl fmt::Display for UniPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dterm(0))
    }
}
