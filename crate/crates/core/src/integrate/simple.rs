//! Simple functions on `X × Z^r` and summation over one integer variable,
//! done by turning `z` into `v(λ)` and integrating in `λ`.

use std::fmt;

use num_traits::{One, Zero};

use super::reader::prepare_on_cell;
use super::symbolic::eliminate_symbolic;
use crate::cells::{Cell, CellCondition};
use crate::error::{Error, Result};
use crate::expr::{CTerm, ConstructibleExpr, DTerm};
use crate::padic::{format_rational, Coset, Prime, Rational};

/// `z ∈ [lo, hi]`, either end possibly open.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ZRange {
    pub lo: Option<i64>,
    pub hi: Option<i64>,
}

impl ZRange {
    pub fn contains(&self, z: i64) -> bool {
        self.lo.is_none_or(|lo| z >= lo) && self.hi.is_none_or(|hi| z <= hi)
    }

    /// `{λ : v(λ) ∈ range}` as a cell condition centered at zero.
    fn condition(&self, p: Prime) -> CellCondition {
        let mut cond = CellCondition::new(DTerm::constant(Rational::zero()), Coset::units());
        if let Some(lo) = self.lo {
            cond = cond.with_upper(DTerm::constant(p.power(lo)), false);
        }
        if let Some(hi) = self.hi {
            cond = cond.with_lower(DTerm::constant(p.power(hi)), false);
        }
        cond
    }
}

/// `coeff · Π z_i^{e_i} · p^{Σ c_i z_i + c_0} · g(x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimpleTerm {
    pub coeff: Rational,
    pub z_powers: Vec<u32>,
    pub q_exponents: Vec<i64>,
    pub q_const: i64,
    pub x_part: ConstructibleExpr,
}

/// A sum of simple terms, restricted to a box of integer points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimpleFunctionExpr {
    pub terms: Vec<SimpleTerm>,
    pub ranges: Vec<ZRange>,
}

impl SimpleFunctionExpr {
    fn check(&self) -> Result<()> {
        let r = self.ranges.len();
        if let Some(t) = self
            .terms
            .iter()
            .find(|t| t.z_powers.len() != r || t.q_exponents.len() != r)
        {
            return Err(Error::Arity(format!(
                "simple term with {} integer variables, expected {r}",
                t.z_powers.len()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[Rational], z: &[i64], p: Prime) -> Result<Rational> {
        self.check()?;
        if z.len() != self.ranges.len() {
            return Err(Error::Arity(format!("{} integer arguments", z.len())));
        }
        if !self.ranges.iter().zip(z).all(|(r, &zi)| r.contains(zi)) {
            return Ok(Rational::zero());
        }
        let mut total = Rational::zero();
        for t in &self.terms {
            let mut v = t.coeff.clone() * t.x_part.eval(x, p)?;
            let mut e = t.q_const;
            for ((&zi, &pw), &c) in z.iter().zip(&t.z_powers).zip(&t.q_exponents) {
                v *= num_traits::pow(Rational::from_integer(zi.into()), pw as usize);
                e += c * zi;
            }
            total += v * p.power(e);
        }
        Ok(total)
    }
}

impl fmt::Display for SimpleFunctionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                let mut parts = vec![format_rational(&t.coeff)];
                for (i, (&e, &c)) in t.z_powers.iter().zip(&t.q_exponents).enumerate() {
                    if e > 0 {
                        parts.push(format!("z{i}^{e}"));
                    }
                    if c != 0 {
                        parts.push(format!("q^({c}*z{i})"));
                    }
                }
                if t.q_const != 0 {
                    parts.push(format!("q^{}", t.q_const));
                }
                if t.x_part.as_constant() != Some(Rational::one()) {
                    parts.push(format!("({})", t.x_part));
                }
                parts.join(" * ")
            })
            .collect();
        write!(f, "{}", if terms.is_empty() { "0".into() } else { terms.join(" + ") })
    }
}

/// The constructible function on `X × K^r` with `f(x, z) = F(x, v(λ))` on
/// `support`, where the variables are `x_0 … x_{m-1}` followed by `λ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Supported {
    pub expr: ConstructibleExpr,
    /// One condition per `λ_i`; the `x` variables are unconstrained.
    pub support: Vec<CellCondition>,
}

fn lambda_factors(mut term: CTerm, lambda: DTerm, power: u32, q_exp: i64) -> CTerm {
    term = term.with_val(lambda.clone(), power);
    // p^{c·v(λ)} = |λ|^{-c}
    if q_exp < 0 {
        term.with_norm(lambda, (-q_exp) as u32)
    } else {
        term.with_norm(DTerm::inv(lambda), q_exp as u32)
    }
}

pub fn simple_to_constructible(f: &SimpleFunctionExpr, x_arity: usize, p: Prime) -> Result<Supported> {
    f.check()?;
    let mut terms = Vec::new();
    for t in &f.terms {
        let mut base = CTerm::constant(t.coeff.clone() * p.power(t.q_const));
        for (i, (&e, &c)) in t.z_powers.iter().zip(&t.q_exponents).enumerate() {
            base = lambda_factors(base, DTerm::var(x_arity + i), e, c);
        }
        let lifted = ConstructibleExpr::from_terms(vec![base]).mul(&t.x_part);
        terms.extend(lifted.terms);
    }
    Ok(Supported {
        expr: ConstructibleExpr::from_terms(terms).simplify(),
        support: f.ranges.iter().map(|r| r.condition(p)).collect(),
    })
}

/// `Σ_{z_last ∈ range} f`, as a simple function of the remaining variables.
/// Uses `Σ_z φ(z) = ∫ φ(v(λ))·p/(p-1)·|λ|^{-1} dλ` over the range's cell.
pub fn sum_eliminate_simple(f: &SimpleFunctionExpr, p: Prime) -> Result<SimpleFunctionExpr> {
    f.check()?;
    let (last, rest) = f
        .ranges
        .split_last()
        .ok_or_else(|| Error::Arity("no integer variable to sum".into()))?;
    if last.lo.is_none() && last.hi.is_none() {
        return Err(Error::UnsupportedRange("sum over all of Z".into()));
    }
    if let (Some(lo), Some(hi)) = (last.lo, last.hi) {
        if lo > hi {
            return Ok(SimpleFunctionExpr {
                terms: Vec::new(),
                ranges: rest.to_vec(),
            });
        }
    }
    let cell = Cell::univariate(last.condition(p))?;
    let pf = Rational::from_integer(p.to_bigint());
    let weight = &pf / (&pf - Rational::one());
    let mut terms: Vec<SimpleTerm> = Vec::new();
    for t in &f.terms {
        let power = *t.z_powers.last().expect("checked arity");
        let q_exp = *t.q_exponents.last().expect("checked arity");
        let lambda = DTerm::var(0);
        let integrand = lambda_factors(CTerm::constant(weight.clone()), lambda.clone(), power, q_exp)
            .with_norm(DTerm::inv(lambda), 1);
        let integrand = ConstructibleExpr::from_terms(vec![integrand]).simplify();
        let ci = prepare_on_cell(&integrand, &cell, p)?;
        let result = eliminate_symbolic(&[ci], p)?;
        if result.nonintegrable {
            return Err(Error::Divergent(format!(
                "Σ z^{power}·p^({q_exp}·z) over {last:?}"
            )));
        }
        let sum = result
            .as_single()
            .and_then(|e| e.as_constant())
            .ok_or_else(|| Error::Unsupported("non-constant sum over a constant range".into()))?;
        let mut reduced = SimpleTerm {
            coeff: &t.coeff * sum,
            z_powers: t.z_powers[..rest.len()].to_vec(),
            q_exponents: t.q_exponents[..rest.len()].to_vec(),
            q_const: t.q_const,
            x_part: t.x_part.clone(),
        };
        if reduced.coeff.is_zero() {
            continue;
        }
        match terms.iter_mut().find(|u| {
            u.z_powers == reduced.z_powers
                && u.q_exponents == reduced.q_exponents
                && u.q_const == reduced.q_const
                && u.x_part == reduced.x_part
        }) {
            Some(u) => u.coeff += std::mem::take(&mut reduced.coeff),
            None => terms.push(reduced),
        }
    }
    terms.retain(|t| !t.coeff.is_zero());
    Ok(SimpleFunctionExpr {
        terms,
        ranges: rest.to_vec(),
    })
}
