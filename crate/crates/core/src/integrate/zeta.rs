//! Igusa's local zeta function `Z(T) = ∫_{Z_p} |f|^s` with `T = p^{-s}`, as a
//! rational function in `T`, and the Poincaré series check.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};

use crate::cells::{level_set_measure, Cell};
use crate::decompose::decompose_univariate;
use crate::error::{Error, Result};
use crate::padic::{format_rational, residue, valuation, Prime, Rational};
use crate::poly::UniPoly;

use super::index_range;

/// The factor `1 - p^{-c}·T^d` of a denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZetaFactor {
    pub c: i64,
    pub d: i64,
}

impl ZetaFactor {
    fn poly(&self, p: Prime) -> UniPoly {
        let mut coeffs = vec![Rational::zero(); self.d as usize + 1];
        coeffs[0] = Rational::one();
        coeffs[self.d as usize] -= p.power(-self.c);
        UniPoly::new(coeffs)
    }
}

/// `T^shift · numerator(T) / Π (1 - p^{-c}·T^d)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZetaRational {
    pub numerator: Vec<Rational>,
    pub numerator_shift: i64,
    pub denominator_factors: Vec<ZetaFactor>,
    pub p: Prime,
}

impl ZetaRational {
    pub fn eval(&self, t: &Rational) -> Result<Rational> {
        let num = UniPoly::new(self.numerator.clone()).eval(t);
        let shift = if self.numerator_shift >= 0 {
            num_traits::pow(t.clone(), self.numerator_shift as usize)
        } else if t.is_zero() {
            return Err(Error::ZeroInput { op: "zeta at T = 0" });
        } else {
            num_traits::pow(t.recip(), (-self.numerator_shift) as usize)
        };
        let mut den = Rational::one();
        for f in &self.denominator_factors {
            den *= f.poly(self.p).eval(t);
        }
        if den.is_zero() {
            return Err(Error::ZeroInput { op: "zeta at a pole" });
        }
        Ok(num * shift / den)
    }

    /// The first `count` coefficients of the expansion at `T = 0`.
    pub fn series(&self, count: usize) -> Result<Vec<Rational>> {
        if self.numerator_shift < 0 {
            return Err(Error::Unsupported("zeta function with a pole at T = 0".into()));
        }
        let mut den = UniPoly::constant(Rational::one());
        for f in &self.denominator_factors {
            den = den.mul(&f.poly(self.p));
        }
        let num = self.numerator.clone();
        let den = den.coeffs().to_vec();
        let shift = self.numerator_shift as usize;
        let mut out = vec![Rational::zero(); count];
        // out·den = T^shift·num, with den[0] = 1
        for i in 0..count {
            let mut acc = if i >= shift {
                num.get(i - shift).cloned().unwrap_or_else(Rational::zero)
            } else {
                Rational::zero()
            };
            for j in 1..den.len().min(i + 1) {
                acc -= &den[j] * &out[i - j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "numerator": self.numerator.iter().map(format_rational).collect::<Vec<_>>(),
            "denominator_factors": self
                .denominator_factors
                .iter()
                .map(|f| json!({"c": f.c, "d": f.d}))
                .collect::<Vec<_>>(),
        });
        if self.numerator_shift != 0 {
            v["numerator_shift"] = json!(self.numerator_shift);
        }
        v
    }
}

impl fmt::Display for ZetaRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num: Vec<String> = self
            .numerator
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| {
                let e = i as i64 + self.numerator_shift;
                match e {
                    0 => format_rational(c),
                    1 => format!("{}*T", format_rational(c)),
                    _ => format!("{}*T^{e}", format_rational(c)),
                }
            })
            .collect();
        let num = if num.is_empty() { "0".to_string() } else { num.join(" + ") };
        if self.denominator_factors.is_empty() {
            return write!(f, "{num}");
        }
        let p = self.p.get();
        let den: Vec<String> = self
            .denominator_factors
            .iter()
            .map(|z| {
                let t = if z.d == 1 { "T".to_string() } else { format!("T^{}", z.d) };
                format!("(1 - {p}^-{}*{t})", z.c)
            })
            .collect();
        if den.len() == 1 {
            write!(f, "({num}) / {}", den[0])
        } else {
            write!(f, "({num}) / ({})", den.join(" * "))
        }
    }
}

type Laurent = BTreeMap<i64, Rational>;

fn add_monomial(acc: &mut Laurent, e: i64, c: Rational) {
    if c.is_zero() {
        return;
    }
    let entry = acc.entry(e).or_insert_with(Rational::zero);
    *entry += c;
    if entry.is_zero() {
        acc.remove(&e);
    }
}

fn laurent_mul_poly(a: &Laurent, b: &UniPoly) -> Laurent {
    let mut out = Laurent::new();
    for (e, c) in a {
        for (i, d) in b.coeffs().iter().enumerate() {
            add_monomial(&mut out, e + i as i64, c * d);
        }
    }
    out
}

/// `Z(T)` for `f` over `Z_p`, reduced by the denominator factors that
/// divide the numerator.
pub fn igusa_zeta(f: &UniPoly, p: Prime, precision: u32) -> Result<ZetaRational> {
    let dec = decompose_univariate(f, p, &Cell::unit_ball(p), precision)?;
    // numerators keyed by their single denominator factor, if any
    let mut parts: BTreeMap<Option<ZetaFactor>, Laurent> = BTreeMap::new();
    for piece in dec.pieces.iter().filter(|pc| !pc.cell.last().is_point()) {
        let term = piece.prepared(0, p);
        let cond = piece.cell.last();
        let raw = term.raw_delta.clone().expect("decomposition records δ");
        let vmu = valuation(&cond.coset.mu, p).finite().expect("nonzero coset");
        let n = cond.coset.n as i64;
        let a = term.a;
        let v_delta = valuation(&raw, p).finite().ok_or(Error::ValuationOfZero)?
            + (a / n) * vmu;
        let range = cond.valuation_range(&[], p)?;
        if range.is_empty() {
            continue;
        }
        let (j_min, j_max) = index_range(range.k_min, range.k_max, vmu, n);
        let j_min = j_min.ok_or_else(|| Error::UnboundedDomain("piece without outer bound".into()))?;
        let eps = level_set_measure(&cond.coset, p)?.epsilon;
        let scale = eps * p.power(-vmu);
        // ε·p^{-v(μ)}·T^{v(δ)}·Σ_j (p^{-n}·T^a)^j
        match j_max {
            Some(j_max) => {
                let entry = parts.entry(None).or_default();
                for j in j_min..=j_max {
                    add_monomial(entry, v_delta + a * j, &scale * p.power(-n * j));
                }
            }
            None if a == 0 => {
                let geometric = p.power(-n * j_min) / (Rational::one() - p.power(-n));
                add_monomial(parts.entry(None).or_default(), v_delta, scale * geometric);
            }
            None if a > 0 => {
                let key = Some(ZetaFactor { c: n, d: a });
                add_monomial(
                    parts.entry(key).or_default(),
                    v_delta + a * j_min,
                    scale * p.power(-n * j_min),
                );
            }
            None => return Err(Error::Divergent("|f| unbounded near a point of Z_p".into())),
        }
    }
    let factors: Vec<ZetaFactor> = parts.keys().flatten().copied().collect();
    let mut numerator = Laurent::new();
    for (key, num) in &parts {
        let mut term = num.clone();
        for other in factors.iter().filter(|f| Some(**f) != *key) {
            term = laurent_mul_poly(&term, &other.poly(p));
        }
        for (e, c) in term {
            add_monomial(&mut numerator, e, c);
        }
    }
    let shift = numerator.keys().next().copied().unwrap_or(0);
    let dense = |lt: &Laurent| {
        let top = lt.keys().last().copied().unwrap_or(shift);
        let mut v = vec![Rational::zero(); (top - shift + 1) as usize];
        for (e, c) in lt {
            v[(e - shift) as usize] = c.clone();
        }
        UniPoly::new(v)
    };
    let mut num = dense(&numerator);
    let mut kept = Vec::new();
    for factor in factors {
        let (q, r) = num.div_rem(&factor.poly(p));
        if r.is_zero() && !num.is_zero() {
            num = q;
        } else {
            kept.push(factor);
        }
    }
    Ok(ZetaRational {
        numerator: num.coeffs().to_vec(),
        numerator_shift: if num.is_zero() { 0 } else { shift },
        denominator_factors: kept,
        p,
    })
}

/// Comparison of the series `(1 - T·Z(T))/(1 - T)` with the counts
/// `N_i = #{x mod p^i : f(x) ≡ 0 mod p^i}` scaled by `p^{-i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoincareReport {
    pub predicted: Vec<Rational>,
    pub counted: Vec<Rational>,
    pub pass: bool,
}

/// Roots of `f` modulo `p^i` for `i < count`, by enumeration.
pub fn count_roots(f: &UniPoly, p: Prime, count: usize) -> Result<Vec<BigInt>> {
    if f.content_valuation(p).finite().is_some_and(|v| v < 0) {
        return Err(Error::Unsupported("f must have p-integral coefficients".into()));
    }
    let mut out = vec![BigInt::one()];
    for i in 1..count {
        let modulus = p.int_power(i as u32);
        let coeffs: Vec<BigInt> = f
            .coeffs()
            .iter()
            .map(|c| residue(c, &modulus).expect("p-integral"))
            .collect();
        let m = p
            .u64_power(i as u32)
            .ok_or_else(|| Error::Unsupported("modulus too large to enumerate".into()))?;
        let mut n = BigInt::zero();
        for x in 0..m {
            let x = BigInt::from(x);
            let mut acc = BigInt::zero();
            for c in coeffs.iter().rev() {
                acc = (acc * &x + c) % &modulus;
            }
            if acc.is_zero() {
                n += 1;
            }
        }
        out.push(n);
    }
    Ok(out)
}

pub fn poincare_check(f: &UniPoly, p: Prime, zeta: &ZetaRational, count: usize) -> Result<PoincareReport> {
    let z = zeta.series(count)?;
    // (1 - T·Z)/(1 - T): partial sums of 1 - T·Z
    let mut predicted = Vec::with_capacity(count);
    let mut acc = Rational::zero();
    for i in 0..count {
        let coeff = if i == 0 { Rational::one() } else { -z[i - 1].clone() };
        acc += coeff;
        predicted.push(acc.clone());
    }
    let counted: Vec<Rational> = count_roots(f, p, count)?
        .into_iter()
        .enumerate()
        .map(|(i, n)| Rational::from_integer(n) * p.power(-(i as i64)))
        .collect();
    let pass = predicted == counted && predicted.iter().all(|c| !c.is_negative());
    Ok(PoincareReport {
        predicted,
        counted,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::decompose_univariate;
    use crate::integrate::integrate_term;
    use crate::padic::{int, rat};

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    #[test]
    fn monomials() {
        let z = igusa_zeta(&UniPoly::from_ints(&[0, 1]), p3(), 8).unwrap();
        assert_eq!(z.numerator, vec![rat(2, 3)]);
        assert_eq!(z.denominator_factors, vec![ZetaFactor { c: 1, d: 1 }]);
        let z2 = igusa_zeta(&UniPoly::from_ints(&[0, 0, 1]), p3(), 8).unwrap();
        assert_eq!(z2.denominator_factors, vec![ZetaFactor { c: 1, d: 2 }]);
        assert_eq!(z2.eval(&Rational::one()).unwrap(), int(1));
    }

    #[test]
    fn two_simple_roots() {
        let f = UniPoly::from_ints(&[0, -1, 1]);
        let z = igusa_zeta(&f, p3(), 8).unwrap();
        assert_eq!(z.numerator, vec![rat(1, 3), rat(1, 3)]);
        assert_eq!(z.to_string(), "(1/3 + 1/3*T) / (1 - 3^-1*T)");
        let no_roots = igusa_zeta(&UniPoly::from_ints(&[-2, 0, 1]), p3(), 8).unwrap();
        assert_eq!(no_roots.numerator, vec![int(1)]);
        assert!(no_roots.denominator_factors.is_empty());
    }

    #[test]
    fn matches_direct_integration() {
        let p = p3();
        for f in [
            UniPoly::from_ints(&[0, 0, 1, -1]),
            UniPoly::from_ints(&[-3, 0, 1]),
            UniPoly::from_ints(&[9, 0, 1]),
            UniPoly::from_ints(&[-7, 0, 1]),
        ] {
            let z = igusa_zeta(&f, p, 10).unwrap();
            let dec = decompose_univariate(&f, p, &Cell::unit_ball(p), 10).unwrap();
            for s in 1..4u32 {
                let direct: Rational = dec
                    .terms(0, p)
                    .iter()
                    .map(|t| integrate_term(&t.power(s), &[], p).unwrap().unwrap())
                    .sum();
                assert_eq!(z.eval(&p.power(-(s as i64))).unwrap(), direct, "f={f:?} s={s}");
            }
        }
    }

    #[test]
    fn poincare_series() {
        let p = p3();
        for f in [
            UniPoly::from_ints(&[0, -1, 1]),
            UniPoly::from_ints(&[0, 0, 1]),
            UniPoly::from_ints(&[-7, 0, 1]),
            UniPoly::from_ints(&[0, 0, 1, -1]),
        ] {
            let z = igusa_zeta(&f, p, 10).unwrap();
            let report = poincare_check(&f, p, &z, 6).unwrap();
            assert!(report.pass, "{f:?}: {report:?}");
        }
    }

    #[test]
    fn json_shape() {
        let z = igusa_zeta(&UniPoly::from_ints(&[0, 1]), p3(), 8).unwrap();
        assert_eq!(
            z.to_json(),
            json!({"numerator": ["2/3"], "denominator_factors": [{"c": 1, "d": 1}]})
        );
    }
}
