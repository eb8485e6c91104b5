use num_traits::{One, Zero};

use super::eval::{eval_dterm, Approx};
use super::DTerm;
use crate::error::{Error, Result};
use crate::padic::{Prime, Rational};

/// One product `coeff · Π v(h)^e · Π |h'|^e'`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CTerm {
    pub coeff: Rational,
    pub val_factors: Vec<(DTerm, u32)>,
    pub norm_factors: Vec<(DTerm, u32)>,
}

impl CTerm {
    pub fn constant(coeff: Rational) -> Self {
        CTerm {
            coeff,
            val_factors: Vec::new(),
            norm_factors: Vec::new(),
        }
    }

    pub fn with_val(mut self, h: DTerm, e: u32) -> Self {
        if e > 0 {
            self.val_factors.push((h, e));
        }
        self
    }

    pub fn with_norm(mut self, h: DTerm, e: u32) -> Self {
        if e > 0 {
            self.norm_factors.push((h, e));
        }
        self
    }

    fn product(&self, other: &CTerm) -> CTerm {
        let mut out = self.clone();
        out.coeff *= &other.coeff;
        out.val_factors.extend(other.val_factors.iter().cloned());
        out.norm_factors.extend(other.norm_factors.iter().cloned());
        out.canonicalize();
        out
    }

    /// Merges repeated factors and sorts them.
    fn canonicalize(&mut self) {
        merge_factors(&mut self.val_factors);
        merge_factors(&mut self.norm_factors);
    }

    pub fn factors(&self) -> impl Iterator<Item = &DTerm> {
        self.val_factors
            .iter()
            .chain(self.norm_factors.iter())
            .map(|(h, _)| h)
    }

    pub fn rename(&self, map: &dyn Fn(usize) -> usize) -> CTerm {
        CTerm {
            coeff: self.coeff.clone(),
            val_factors: self
                .val_factors
                .iter()
                .map(|(h, e)| (h.rename(map), *e))
                .collect(),
            norm_factors: self
                .norm_factors
                .iter()
                .map(|(h, e)| (h.rename(map), *e))
                .collect(),
        }
    }
}

fn merge_factors(factors: &mut Vec<(DTerm, u32)>) {
    factors.sort_by(|a, b| a.0.cmp(&b.0));
    let mut merged: Vec<(DTerm, u32)> = Vec::with_capacity(factors.len());
    for (h, e) in factors.drain(..) {
        match merged.last_mut() {
            Some((last, acc)) if *last == h => *acc += e,
            _ => merged.push((h, e)),
        }
    }
    *factors = merged;
}

/// A subanalytic constructible function `Σ coeff · Π v(h)^e · Π |h'|^e'`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ConstructibleExpr {
    pub terms: Vec<CTerm>,
}

impl ConstructibleExpr {
    pub fn zero() -> Self {
        ConstructibleExpr { terms: Vec::new() }
    }

    pub fn constant(c: Rational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        ConstructibleExpr {
            terms: vec![CTerm::constant(c)],
        }
    }

    /// Keeps the terms in the given order.
    pub fn from_terms(terms: Vec<CTerm>) -> Self {
        ConstructibleExpr { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.is_zero())
    }

    /// Returns the value if no term carries a factor.
    pub fn as_constant(&self) -> Option<Rational> {
        let mut acc = Rational::zero();
        for t in &self.terms {
            if !t.val_factors.is_empty() || !t.norm_factors.is_empty() {
                return None;
            }
            acc += &t.coeff;
        }
        Some(acc)
    }

    pub fn add(&self, other: &ConstructibleExpr) -> ConstructibleExpr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        ConstructibleExpr { terms }
    }

    pub fn mul(&self, other: &ConstructibleExpr) -> ConstructibleExpr {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.product(b));
            }
        }
        ConstructibleExpr { terms }
    }

    pub fn scale(&self, c: &Rational) -> ConstructibleExpr {
        ConstructibleExpr {
            terms: self
                .terms
                .iter()
                .map(|t| CTerm {
                    coeff: &t.coeff * c,
                    ..t.clone()
                })
                .collect(),
        }
    }

    /// Merges terms with identical factor lists and drops zero terms.
    pub fn simplify(&self) -> ConstructibleExpr {
        let mut terms: Vec<CTerm> = Vec::new();
        for t in &self.terms {
            let mut t = t.clone();
            t.canonicalize();
            match terms
                .iter_mut()
                .find(|u| u.val_factors == t.val_factors && u.norm_factors == t.norm_factors)
            {
                Some(u) => u.coeff += &t.coeff,
                None => terms.push(t),
            }
        }
        terms.retain(|t| !t.coeff.is_zero());
        ConstructibleExpr { terms }
    }

    pub fn arity(&self) -> usize {
        self.terms
            .iter()
            .flat_map(CTerm::factors)
            .map(DTerm::arity)
            .max()
            .unwrap_or(0)
    }

    pub fn rename(&self, map: &dyn Fn(usize) -> usize) -> ConstructibleExpr {
        ConstructibleExpr {
            terms: self.terms.iter().map(|t| t.rename(map)).collect(),
        }
    }

    /// Exact value at a rational point.
    pub fn eval(&self, point: &[Rational], p: Prime) -> Result<Rational> {
        let approx: Vec<Approx> = point.iter().cloned().map(Approx::exact).collect();
        self.eval_approx(&approx, p)
    }

    /// Value at a point known only to finite precision. Fails with
    /// [`Error::Undetermined`] when some factor is not fixed by the inputs.
    pub fn eval_approx(&self, point: &[Approx], p: Prime) -> Result<Rational> {
        let mut total = Rational::zero();
        for term in &self.terms {
            if term.coeff.is_zero() {
                continue;
            }
            let mut value = term.coeff.clone();
            for (h, e) in &term.val_factors {
                let hv = eval_dterm(h, point, p)?;
                if hv.is_exact() && hv.value.is_zero() {
                    return Err(Error::ValuationOfZero);
                }
                let v = hv
                    .determined_valuation(p)
                    .ok_or_else(|| Error::Undetermined(format!("v({h})")))?;
                value *= num_traits::pow(Rational::from_integer(v.into()), *e as usize);
            }
            for (h, e) in &term.norm_factors {
                let hv = eval_dterm(h, point, p)?;
                let n = hv
                    .determined_norm(p)
                    .ok_or_else(|| Error::Undetermined(format!("|{h}|")))?;
                value *= num_traits::pow(n, *e as usize);
            }
            total += value;
        }
        Ok(total)
    }
}

impl From<Rational> for ConstructibleExpr {
    fn from(c: Rational) -> Self {
        ConstructibleExpr::constant(c)
    }
}

impl One for ConstructibleExpr {
    fn one() -> Self {
        ConstructibleExpr::constant(Rational::one())
    }
}

impl std::ops::Mul for ConstructibleExpr {
    type Output = ConstructibleExpr;
    fn mul(self, rhs: Self) -> Self {
        ConstructibleExpr::mul(&self, &rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_constructible;
    use super::*;
    use crate::padic::{int, rat};

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let f = parse_constructible("v(x0)").unwrap();
        assert_eq!(f.eval(&[int(9)], p3()).unwrap(), int(2));
        let f = parse_constructible("abs(x0)").unwrap();
        assert_eq!(f.eval(&[int(0)], p3()).unwrap(), int(0));
        let f = parse_constructible("2 * v(x0) * abs(x0)").unwrap();
        assert_eq!(f.eval(&[int(3)], p3()).unwrap(), rat(2, 3));
    }

    #[test]
    fn valuation_of_zero_is_an_error() {
        let f = parse_constructible("v(x0 - 1)").unwrap();
        assert!(matches!(f.eval(&[int(1)], p3()), Err(Error::ValuationOfZero)));
    }

    #[test]
    fn simplify_merges_like_terms() {
        let f = parse_constructible("v(x0) * abs(x1) + 2 * abs(x1) * v(x0) - 3 * v(x0) * abs(x1)")
            .unwrap();
        assert!(f.simplify().is_zero());
        assert!(f.simplify().terms.is_empty());
    }
}
