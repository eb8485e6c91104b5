//! Reading an integrand as prepared terms on a cell, and the automatic
//! route through the univariate decomposition.

use num_traits::{One, Zero};

use super::symbolic::{Guard, Piece, PiecewiseExpr};
use super::{integrate_term, CellIntegrand};
use crate::cells::{Cell, CellCondition};
use crate::decompose::{decompose_family, PreparedTerm};
use crate::error::{Error, Result};
use crate::expr::{Approx, CTerm, ConstructibleExpr, DTerm};
use crate::padic::{norm, valuation, Prime, Rational};
use crate::poly::UniPoly;

/// On a cell, `|h| = |coeff|·|t - γ|^mult` and `v(h) = v(coeff) + mult·v(t - γ)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorShape {
    pub coeff: DTerm,
    pub mult: i64,
}

impl FactorShape {
    fn inverted(self) -> FactorShape {
        let coeff = match self.coeff.as_const() {
            Some(c) if !c.is_zero() => DTerm::constant(c.recip()),
            _ => DTerm::inv(self.coeff),
        };
        FactorShape {
            coeff,
            mult: -self.mult,
        }
    }
}

fn mentions(h: &DTerm, var: usize) -> bool {
    h.variables().contains(&var)
}

/// Polynomials in `V = v(t - γ)` with expression coefficients.
fn poly_mul(a: &[ConstructibleExpr], b: &[ConstructibleExpr]) -> Vec<ConstructibleExpr> {
    let mut out = vec![ConstructibleExpr::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(&x.mul(y));
        }
    }
    out
}

/// Splits one product into prepared pieces `(δ, a, l)`.
fn assemble(
    term: &CTerm,
    var: usize,
    mut shape_of: impl FnMut(&DTerm) -> Result<FactorShape>,
    cond: &CellCondition,
    p: Prime,
) -> Result<Vec<(ConstructibleExpr, i64, u32)>> {
    let mut base = CTerm::constant(term.coeff.clone());
    let mut exponent = 0i64;
    for (h, e) in &term.norm_factors {
        if !mentions(h, var) {
            base = base.with_norm(h.clone(), *e);
            continue;
        }
        let s = shape_of(h)?;
        exponent += s.mult * *e as i64;
        match s.coeff.as_const() {
            Some(c) => base.coeff *= num_traits::pow(norm(c, p), *e as usize),
            None => base = base.with_norm(s.coeff, *e),
        }
    }
    let mut in_v = vec![ConstructibleExpr::constant(Rational::one())];
    for (h, e) in &term.val_factors {
        if !mentions(h, var) {
            base = base.with_val(h.clone(), *e);
            continue;
        }
        let s = shape_of(h)?;
        let offset = match s.coeff.as_const() {
            Some(c) => ConstructibleExpr::constant(Rational::from_integer(
                valuation(c, p).finite().ok_or(Error::ValuationOfZero)?.into(),
            )),
            None => ConstructibleExpr::from_terms(vec![
                CTerm::constant(Rational::one()).with_val(s.coeff.clone(), 1)
            ]),
        };
        let linear = [offset, ConstructibleExpr::constant(Rational::from_integer(s.mult.into()))];
        for _ in 0..*e {
            in_v = poly_mul(&in_v, &linear);
        }
    }
    let n = cond.coset.n as i64;
    let mu_norm = norm(&cond.coset.mu, p);
    base.coeff *= if exponent >= 0 {
        num_traits::pow(mu_norm, exponent as usize)
    } else {
        num_traits::pow(mu_norm.recip(), (-exponent) as usize)
    };
    let base = ConstructibleExpr::from_terms(vec![base]);
    Ok(in_v
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(l, c)| (base.mul(&c).simplify(), exponent * n, l as u32))
        .collect())
}

/// Index of the Taylor coefficient that dominates on the whole range, if
/// there is one.
fn dominant_index(b: &[Rational], k_min: Option<i64>, k_max: Option<i64>, p: Prime) -> Option<usize> {
    let support: Vec<(usize, i64)> = b
        .iter()
        .enumerate()
        .filter_map(|(i, c)| valuation(c, p).finite().map(|v| (i, v)))
        .collect();
    if support.len() == 1 {
        return Some(support[0].0);
    }
    let lowest = support.first()?.0;
    let highest = support.last()?.0;
    support.iter().map(|&(i, _)| i).find(|&i| {
        if k_min.is_none() && i != highest || k_max.is_none() && i != lowest {
            return false;
        }
        let vi = support.iter().find(|s| s.0 == i).unwrap().1;
        [k_min, k_max].iter().flatten().all(|&k| {
            support
                .iter()
                .filter(|s| s.0 != i)
                .all(|&(j, vj)| vi + i as i64 * k < vj + j as i64 * k)
        })
    })
}

fn shape_on_cell(h: &DTerm, var: usize, cond: &CellCondition, p: Prime) -> Result<FactorShape> {
    if let DTerm::Inv(inner) = h {
        return Ok(shape_on_cell(inner, var, cond, p)?.inverted());
    }
    let h = h.normalize();
    let linear = DTerm::sub(DTerm::var(var), cond.center.clone()).normalize();
    if h == linear {
        return Ok(FactorShape {
            coeff: DTerm::constant(Rational::one()),
            mult: 1,
        });
    }
    let unsupported = || Error::Unsupported(format!("factor {h} is not prepared on the cell {cond}"));
    let (Some(f), Some(center)) = (UniPoly::from_dterm(&h, var), cond.center.as_const()) else {
        return Err(unsupported());
    };
    let bounds_constant = [&cond.lower, &cond.upper]
        .iter()
        .all(|b| b.as_ref().is_none_or(|b| b.variables().is_empty()));
    if !bounds_constant {
        return Err(unsupported());
    }
    let zeros = vec![Approx::exact(Rational::zero()); var];
    let range = cond.valuation_range(&zeros, p)?;
    let b = f.taylor_at(center);
    let index = if range.is_empty() {
        Some(0)
    } else {
        dominant_index(&b, range.k_min, range.k_max, p)
    };
    let i = index.ok_or_else(unsupported)?;
    Ok(FactorShape {
        coeff: DTerm::constant(b[i].clone()),
        mult: i as i64,
    })
}

/// Reads `integrand` as prepared terms on `cell`, integrating in its last
/// variable. Each factor in that variable must be `t - γ`, or a polynomial
/// in `t` with one dominant Taylor coefficient at `γ` across the cell.
pub fn prepare_on_cell(integrand: &ConstructibleExpr, cell: &Cell, p: Prime) -> Result<CellIntegrand> {
    let var = cell.arity() - 1;
    let cond = cell.last();
    if cond.is_point() {
        return CellIntegrand::new(cell.clone(), Vec::new());
    }
    let mut terms = Vec::new();
    for term in &integrand.simplify().terms {
        for (delta, a, l) in assemble(term, var, |h| shape_on_cell(h, var, cond, p), cond, p)? {
            terms.push(PreparedTerm::new(delta, a, l, cell.clone()));
        }
    }
    CellIntegrand::new(cell.clone(), terms)
}

/// `∫_{Z_p} f dx_{m-1}` for integrands whose factors in `x_{m-1}` are
/// polynomials in that variable alone. The result is an expression in the
/// remaining variables.
pub fn eliminate_auto(
    integrand: &ConstructibleExpr,
    arity: usize,
    p: Prime,
    precision: u32,
) -> Result<PiecewiseExpr> {
    let var = arity
        .checked_sub(1)
        .ok_or_else(|| Error::Arity("nothing to integrate".into()))?;
    let integrand = integrand.simplify();
    let strip = |h: &DTerm| -> DTerm {
        match h {
            DTerm::Inv(inner) => inner.normalize(),
            _ => h.normalize(),
        }
    };
    let mut factors: Vec<DTerm> = Vec::new();
    for term in &integrand.terms {
        for h in term.factors().filter(|h| mentions(h, var)) {
            let inner = strip(h);
            if inner.variables().len() != 1 || UniPoly::from_dterm(&inner, var).is_none() {
                return Err(Error::Unsupported(format!(
                    "factor {h} mixes x{var} with other variables or is not polynomial in it"
                )));
            }
            if !factors.contains(&inner) {
                factors.push(inner);
            }
        }
    }
    let whole = |expr: ConstructibleExpr| PiecewiseExpr {
        pieces: vec![Piece {
            guard: Guard {
                base: Cell {
                    conditions: Vec::new(),
                },
                pins: Vec::new(),
            },
            expr,
        }],
        nonintegrable: false,
    };
    if factors.is_empty() {
        return Ok(whole(integrand).collapse());
    }
    let polys: Vec<UniPoly> = factors
        .iter()
        .map(|h| UniPoly::from_dterm(h, var).expect("checked"))
        .collect();
    let dec = decompose_family(&polys, p, &Cell::unit_ball(p), precision)?;
    let mut total = ConstructibleExpr::zero();
    for piece in dec.pieces.iter().filter(|pc| !pc.cell.last().is_point()) {
        let cond = piece.cell.last();
        let shape_of = |h: &DTerm| -> Result<FactorShape> {
            let i = factors.iter().position(|f| *f == strip(h)).expect("collected");
            let s = &piece.shapes[i];
            let shape = FactorShape {
                coeff: DTerm::constant(s.coeff.clone()),
                mult: s.mult as i64,
            };
            Ok(match h {
                DTerm::Inv(_) => shape.inverted(),
                _ => shape,
            })
        };
        for term in &integrand.terms {
            for (delta, a, l) in assemble(term, var, shape_of, cond, p)? {
                let unit = ConstructibleExpr::constant(Rational::one());
                let scalar = PreparedTerm::new(unit, a, l, piece.cell.clone());
                match integrate_term(&scalar, &[], p)? {
                    Some(s) => total = total.add(&delta.scale(&s)),
                    None => return Ok(PiecewiseExpr::nonintegrable()),
                }
            }
        }
    }
    Ok(whole(total.simplify()).collapse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_constructible;
    use crate::padic::{int, rat, Coset};

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    fn on(text: &str, cond: CellCondition) -> Rational {
        let cell = Cell::univariate(cond).unwrap();
        let ci = prepare_on_cell(&parse_constructible(text).unwrap(), &cell, p3()).unwrap();
        super::super::integrate_cell(&ci, &[], p3()).unwrap().unwrap()
    }

    fn around(c: i64) -> CellCondition {
        CellCondition::new(DTerm::constant(int(c)), Coset::units())
    }

    #[test]
    fn linear_factors() {
        let unit = |c| around(c).with_upper(DTerm::constant(int(1)), false);
        assert_eq!(on("abs(x0)", unit(0)), rat(3, 4));
        // Σ_{k≥0} k·(2/3)·3^{-3k}
        let expected = rat(2, 3) * rat(1, 27) / (rat(26, 27) * rat(26, 27));
        assert_eq!(on("v(x0 - 1) * abs(x0 - 1)^2", unit(1)), expected);
        assert_eq!(on("2 * abs(inv(x0)) * abs(x0)", unit(0)), int(2));
    }

    #[test]
    fn dominant_coefficient() {
        let deep = around(0).with_upper(DTerm::constant(int(9)), false);
        assert_eq!(on("abs(x0^2 + 3)", deep), rat(1, 27));
        // k in {-1, -2}: |t^2 + 3| = |t|^2
        let outer = around(0)
            .with_upper(DTerm::constant(rat(1, 9)), false)
            .with_lower(DTerm::constant(int(1)), true);
        assert_eq!(on("abs(inv(x0^2 + 3)) * abs(x0)", outer), rat(4, 3));
        let mixed = around(0)
            .with_upper(DTerm::constant(int(1)), false)
            .with_lower(DTerm::constant(int(3)), false);
        let cell = Cell::univariate(mixed).unwrap();
        let f = parse_constructible("abs(x0^2 + 3)").unwrap();
        assert!(matches!(prepare_on_cell(&f, &cell, p3()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn auto_over_integers() {
        let auto = |s: &str| {
            eliminate_auto(&parse_constructible(s).unwrap(), 1, p3(), 8)
                .unwrap()
                .as_single()
                .unwrap()
                .as_constant()
                .unwrap()
        };
        assert_eq!(auto("abs(x0)"), rat(3, 4));
        assert_eq!(auto("abs(x0 * (x0 - 1))"), rat(1, 2));
        assert_eq!(auto("v(x0)"), rat(1, 2));
        assert_eq!(auto("abs(x0^2 - 2)"), int(1));
        let div = eliminate_auto(&parse_constructible("abs(inv(x0))").unwrap(), 1, p3(), 8).unwrap();
        assert!(div.nonintegrable);
    }

    #[test]
    fn auto_iterated_and_fubini() {
        let twice = |s: &str| {
            let inner = eliminate_auto(&parse_constructible(s).unwrap(), 2, p3(), 8).unwrap();
            let expr = inner.as_single().unwrap();
            eliminate_auto(&expr, 1, p3(), 8).unwrap().as_single().unwrap().as_constant().unwrap()
        };
        let a = twice("abs(x0) * abs(x1^2) + v(x1 - 1) * abs(x0 - 2)");
        let b = twice("abs(x1) * abs(x0^2) + v(x0 - 1) * abs(x1 - 2)");
        assert_eq!(a, b);
        assert_eq!(a, rat(3, 4) * rat(9, 13) + rat(1, 2) * rat(3, 4));
        let mixed = parse_constructible("abs(x0 - x1)").unwrap();
        assert!(matches!(eliminate_auto(&mixed, 2, p3(), 8), Err(Error::Unsupported(_))));
    }
}
