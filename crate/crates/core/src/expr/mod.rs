//! D-function terms and constructible functions.
//!
//! A [`DTerm`] is built from variables, rational constants, ring operations,
//! the field inverse (with `0^{-1} = 0`), univariate polynomial composition
//! and truncated restricted power series. A [`ConstructibleExpr`] is a
//! Q-linear combination of products of `v(h)^e` and `|h|^e`.

mod constructible;
mod eval;
mod parse;
mod print;

use std::collections::BTreeSet;

use num_traits::{One, Zero};

use crate::padic::Rational;

pub use constructible::{CTerm, ConstructibleExpr};
pub use eval::{eval_dterm, eval_dterm_exact, Approx, Precision};
pub use parse::{parse_constructible, parse_dterm};

/// AST of a D-function in the variables `x0, x1, …`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DTerm {
    Var(usize),
    Const(Rational),
    Add(Box<DTerm>, Box<DTerm>),
    Mul(Box<DTerm>, Box<DTerm>),
    Neg(Box<DTerm>),
    /// Field inverse, `inv(0) = 0`.
    Inv(Box<DTerm>),
    /// `Σ coeffs[i]·arg^i`.
    Poly { coeffs: Vec<Rational>, arg: Box<DTerm> },
    /// Restricted power series: the listed coefficients in graded
    /// lexicographic order of multi-indices, every omitted coefficient of
    /// valuation at least `tail_valuation`. Zero outside the unit polydisc.
    Series {
        coeffs: Vec<Rational>,
        tail_valuation: i64,
        args: Vec<DTerm>,
    },
}

// associated constructors, not operator overloads
#[allow(clippy::should_implement_trait)]
impl DTerm {
    pub fn var(i: usize) -> DTerm {
        DTerm::Var(i)
    }

    pub fn constant(c: Rational) -> DTerm {
        DTerm::Const(c)
    }

    pub fn add(a: DTerm, b: DTerm) -> DTerm {
        DTerm::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: DTerm, b: DTerm) -> DTerm {
        DTerm::add(a, DTerm::neg(b))
    }

    pub fn mul(a: DTerm, b: DTerm) -> DTerm {
        DTerm::Mul(Box::new(a), Box::new(b))
    }

    pub fn neg(a: DTerm) -> DTerm {
        DTerm::Neg(Box::new(a))
    }

    pub fn inv(a: DTerm) -> DTerm {
        DTerm::Inv(Box::new(a))
    }

    pub fn poly(coeffs: Vec<Rational>, arg: DTerm) -> DTerm {
        DTerm::Poly {
            coeffs,
            arg: Box::new(arg),
        }
    }

    /// `t - c` in canonical form.
    pub fn shifted_var(i: usize, c: &Rational) -> DTerm {
        DTerm::poly(vec![-c.clone(), Rational::one()], DTerm::Var(i)).normalize()
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self {
            DTerm::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            DTerm::Var(i) => {
                out.insert(*i);
            }
            DTerm::Const(_) => {}
            DTerm::Add(a, b) | DTerm::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            DTerm::Neg(a) | DTerm::Inv(a) => a.collect_vars(out),
            DTerm::Poly { arg, .. } => arg.collect_vars(out),
            DTerm::Series { args, .. } => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Smallest point length the term can be evaluated on.
    pub fn arity(&self) -> usize {
        self.variables().last().map_or(0, |m| m + 1)
    }

    pub fn is_series_free(&self) -> bool {
        match self {
            DTerm::Var(_) | DTerm::Const(_) => true,
            DTerm::Add(a, b) | DTerm::Mul(a, b) => a.is_series_free() && b.is_series_free(),
            DTerm::Neg(a) | DTerm::Inv(a) => a.is_series_free(),
            DTerm::Poly { arg, .. } => arg.is_series_free(),
            DTerm::Series { .. } => false,
        }
    }

    /// Renames variables through `map`.
    pub fn rename(&self, map: &dyn Fn(usize) -> usize) -> DTerm {
        match self {
            DTerm::Var(i) => DTerm::Var(map(*i)),
            DTerm::Const(c) => DTerm::Const(c.clone()),
            DTerm::Add(a, b) => DTerm::add(a.rename(map), b.rename(map)),
            DTerm::Mul(a, b) => DTerm::mul(a.rename(map), b.rename(map)),
            DTerm::Neg(a) => DTerm::neg(a.rename(map)),
            DTerm::Inv(a) => DTerm::inv(a.rename(map)),
            DTerm::Poly { coeffs, arg } => DTerm::poly(coeffs.clone(), arg.rename(map)),
            DTerm::Series {
                coeffs,
                tail_valuation,
                args,
            } => DTerm::Series {
                coeffs: coeffs.clone(),
                tail_valuation: *tail_valuation,
                args: args.iter().map(|a| a.rename(map)).collect(),
            },
        }
    }

    /// Coefficients of the term as a polynomial in at most one variable, if
    /// it is one.
    pub fn as_univariate(&self) -> Option<(Option<usize>, Vec<Rational>)> {
        match self {
            DTerm::Var(i) => Some((Some(*i), vec![Rational::zero(), Rational::one()])),
            DTerm::Const(c) => Some((None, vec![c.clone()])),
            DTerm::Add(a, b) => {
                let (va, ca) = a.as_univariate()?;
                let (vb, cb) = b.as_univariate()?;
                Some((merge_var(va, vb)?, poly_add(&ca, &cb)))
            }
            DTerm::Mul(a, b) => {
                let (va, ca) = a.as_univariate()?;
                let (vb, cb) = b.as_univariate()?;
                Some((merge_var(va, vb)?, poly_mul(&ca, &cb)))
            }
            DTerm::Neg(a) => {
                let (va, ca) = a.as_univariate()?;
                Some((va, ca.iter().map(|c| -c).collect()))
            }
            DTerm::Poly { coeffs, arg } => {
                let (va, ca) = arg.as_univariate()?;
                let mut acc = vec![Rational::zero()];
                for c in coeffs.iter().rev() {
                    acc = poly_add(&poly_mul(&acc, &ca), std::slice::from_ref(c));
                }
                Some((va, acc))
            }
            DTerm::Inv(_) | DTerm::Series { .. } => None,
        }
    }

    /// Canonical form: maximal subterms that are polynomials in a single
    /// variable collapse to `Poly` (or `Var`/`Const`), polynomial
    /// compositions with compound arguments are expanded.
    pub fn normalize(&self) -> DTerm {
        if let Some((var, coeffs)) = self.as_univariate() {
            return from_univariate(var, coeffs);
        }
        let rebuilt = match self {
            DTerm::Add(a, b) => DTerm::add(a.normalize(), b.normalize()),
            DTerm::Mul(a, b) => DTerm::mul(a.normalize(), b.normalize()),
            DTerm::Neg(a) => DTerm::neg(a.normalize()),
            DTerm::Inv(a) => DTerm::inv(a.normalize()),
            DTerm::Poly { coeffs, arg } => expand_poly(coeffs, &arg.normalize()),
            DTerm::Series {
                coeffs,
                tail_valuation,
                args,
            } => DTerm::Series {
                coeffs: coeffs.clone(),
                tail_valuation: *tail_valuation,
                args: args.iter().map(DTerm::normalize).collect(),
            },
            DTerm::Var(_) | DTerm::Const(_) => return self.clone(),
        };
        // simplified children can make the whole node univariate
        match rebuilt.as_univariate() {
            Some((var, coeffs)) => from_univariate(var, coeffs),
            None => rebuilt,
        }
    }
}

fn merge_var(a: Option<usize>, b: Option<usize>) -> Option<Option<usize>> {
    match (a, b) {
        (None, x) | (x, None) => Some(x),
        (Some(i), Some(j)) if i == j => Some(Some(i)),
        _ => None,
    }
}

pub(crate) fn poly_add(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| {
            let x = a.get(i).cloned().unwrap_or_else(Rational::zero);
            let y = b.get(i).cloned().unwrap_or_else(Rational::zero);
            x + y
        })
        .collect()
}

pub(crate) fn poly_mul(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![Rational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn from_univariate(var: Option<usize>, mut coeffs: Vec<Rational>) -> DTerm {
    while coeffs.last().is_some_and(Zero::is_zero) {
        coeffs.pop();
    }
    match (var, coeffs.len()) {
        (_, 0) => DTerm::Const(Rational::zero()),
        (_, 1) | (None, _) => DTerm::Const(coeffs.swap_remove(0)),
        (Some(i), 2) if coeffs[0].is_zero() && coeffs[1].is_one() => DTerm::Var(i),
        (Some(i), _) => DTerm::poly(coeffs, DTerm::Var(i)),
    }
}

fn expand_poly(coeffs: &[Rational], arg: &DTerm) -> DTerm {
    let mut acc: Option<DTerm> = None;
    for (i, c) in coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let mut monomial: Option<DTerm> = None;
        for _ in 0..i {
            monomial = Some(match monomial {
                None => arg.clone(),
                Some(m) => DTerm::mul(m, arg.clone()),
            });
        }
        let term = match monomial {
            None => DTerm::Const(c.clone()),
            Some(m) if c.is_one() => m,
            Some(m) => DTerm::mul(DTerm::Const(c.clone()), m),
        };
        acc = Some(match acc {
            None => term,
            Some(a) => DTerm::add(a, term),
        });
    }
    acc.unwrap_or(DTerm::Const(Rational::zero()))
}

/// Multi-indices in `m` variables, graded lexicographic: total degree first,
/// then descending in the first variable.
pub fn graded_monomials(m: usize, count: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(count);
    let mut degree = 0u32;
    if m == 0 {
        if count > 0 {
            out.push(vec![]);
        }
        return out;
    }
    while out.len() < count {
        let mut layer = Vec::new();
        compositions(degree, m, &mut Vec::new(), &mut layer);
        for idx in layer {
            if out.len() == count {
                break;
            }
            out.push(idx);
        }
        degree += 1;
    }
    out
}

fn compositions(total: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if parts == 1 {
        let mut v = prefix.clone();
        v.push(total);
        out.push(v);
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}
