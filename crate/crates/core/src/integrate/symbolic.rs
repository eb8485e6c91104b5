//! Elimination with the base left symbolic: the result is a constructible
//! expression in `v(α)`, `v(β)`, `|α|`, `|β|` and the term coefficients,
//! valid where `v(α)` and `v(β)` lie in fixed classes modulo `n`.

use std::fmt;

use num_traits::{One, Zero};

use super::{index_range, CellIntegrand};
use crate::cells::{level_set_measure, Cell};
use crate::decompose::PreparedTerm;
use crate::error::{Error, Result};
use crate::expr::{eval_dterm_exact, CTerm, ConstructibleExpr, DTerm};
use crate::padic::{hensel_depth, valuation, Prime, Rational};
use crate::sums::{binomial, flat_sum_polynomial, tail_polynomial};

/// `v(bound) ≡ residue (mod modulus)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ResiduePin {
    pub bound: DTerm,
    pub residue: i64,
    pub modulus: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Guard {
    pub base: Cell,
    pub pins: Vec<ResiduePin>,
}

impl Guard {
    pub fn holds(&self, base: &[Rational], p: Prime) -> Result<bool> {
        if self.base.arity() > 0 {
            let depth = self
                .base
                .conditions
                .iter()
                .map(|c| hensel_depth(p, c.coset.n))
                .max()
                .unwrap_or(1);
            if !self.base.contains(base, p, depth)? {
                return Ok(false);
            }
        }
        for pin in &self.pins {
            let value = eval_dterm_exact(&pin.bound, base, p)?;
            let v = value
                .determined_valuation(p)
                .ok_or_else(|| Error::Undetermined(format!("v({})", pin.bound)))?;
            if v.rem_euclid(pin.modulus) != pin.residue {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub guard: Guard,
    pub expr: ConstructibleExpr,
}

/// A sum of expressions, each counted where its guard holds.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PiecewiseExpr {
    pub pieces: Vec<Piece>,
    pub nonintegrable: bool,
}

impl PiecewiseExpr {
    pub fn nonintegrable() -> Self {
        PiecewiseExpr {
            pieces: Vec::new(),
            nonintegrable: true,
        }
    }

    pub fn eval(&self, base: &[Rational], p: Prime) -> Result<Rational> {
        let mut total = Rational::zero();
        for piece in &self.pieces {
            if piece.guard.holds(base, p)? {
                total += piece.expr.eval(base, p)?;
            }
        }
        Ok(total)
    }

    /// Merges pieces with equal guards and drops pins whose classes all
    /// carry the same expression.
    pub fn collapse(&self) -> PiecewiseExpr {
        let mut pieces = merge_equal_guards(&self.pieces);
        loop {
            let before = pieces.len();
            pieces = drop_redundant_pin(pieces);
            pieces = merge_equal_guards(&pieces);
            if pieces.len() == before {
                break;
            }
        }
        pieces.retain(|p| !p.expr.is_zero());
        PiecewiseExpr {
            pieces,
            nonintegrable: self.nonintegrable,
        }
    }

    /// The expression when a single unguarded piece remains.
    pub fn as_single(&self) -> Option<ConstructibleExpr> {
        match self.pieces.as_slice() {
            [] => Some(ConstructibleExpr::zero()),
            [piece] if piece.guard.pins.is_empty() => Some(piece.expr.clone()),
            _ => None,
        }
    }
}

fn merge_equal_guards(pieces: &[Piece]) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::new();
    for piece in pieces {
        match out.iter_mut().find(|q| q.guard == piece.guard) {
            Some(q) => q.expr = q.expr.add(&piece.expr).simplify(),
            None => out.push(Piece {
                guard: piece.guard.clone(),
                expr: piece.expr.simplify(),
            }),
        }
    }
    out
}

/// Finds a pin such that all `modulus` residues appear with identical
/// expressions and otherwise identical guards, and merges them.
fn drop_redundant_pin(pieces: Vec<Piece>) -> Vec<Piece> {
    for (i, piece) in pieces.iter().enumerate() {
        for (pi, pin) in piece.guard.pins.iter().enumerate() {
            let mut rest = piece.guard.pins.clone();
            rest.remove(pi);
            let siblings: Vec<usize> = pieces
                .iter()
                .enumerate()
                .filter(|(_, q)| {
                    q.guard.base == piece.guard.base
                        && q.expr == piece.expr
                        && q.guard.pins.len() == piece.guard.pins.len()
                        && q.guard.pins.iter().any(|qp| {
                            qp.bound == pin.bound && qp.modulus == pin.modulus && {
                                let mut qr = q.guard.pins.clone();
                                qr.retain(|x| x != qp);
                                qr == rest
                            }
                        })
                })
                .map(|(j, _)| j)
                .collect();
            if siblings.len() as i64 == pin.modulus {
                let merged = Piece {
                    guard: Guard {
                        base: piece.guard.base.clone(),
                        pins: rest,
                    },
                    expr: piece.expr.clone(),
                };
                let mut out: Vec<Piece> = pieces
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| !siblings.contains(j))
                    .map(|(_, q)| q.clone())
                    .collect();
                out.insert(i.min(out.len()), merged);
                return out;
            }
        }
    }
    pieces
}

/// Coefficients of `c(s·V + t)` as a polynomial in `V`.
fn compose_affine(c: &[Rational], s: &Rational, t: &Rational) -> Vec<Rational> {
    let mut out = vec![Rational::zero(); c.len().max(1)];
    for (d, cd) in c.iter().enumerate() {
        if cd.is_zero() {
            continue;
        }
        for (i, slot) in out.iter_mut().enumerate().take(d + 1) {
            *slot += cd
                * binomial(d as u32, i as u32)
                * num_traits::pow(s.clone(), i)
                * num_traits::pow(t.clone(), d - i);
        }
    }
    out
}

/// The summation index `j` at one end of the range.
#[derive(Clone, Debug)]
enum Index {
    Known(i64),
    /// `j = (v(bound) + offset) / n`, an integer under the pin.
    Affine { bound: DTerm, offset: i64 },
}

impl Index {
    fn shifted(&self, by: i64, n: i64) -> Index {
        match self {
            Index::Known(j) => Index::Known(j + by),
            Index::Affine { bound, offset } => Index::Affine {
                bound: bound.clone(),
                offset: offset + by * n,
            },
        }
    }
}

/// `Σ_i c_i · v(bound)^i · extra`, as an expression.
fn valuation_polynomial(coeffs: &[Rational], bound: &DTerm, extra: &CTerm) -> ConstructibleExpr {
    let terms = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| {
            let mut t = extra.clone().with_val(bound.clone(), i as u32);
            t.coeff *= c;
            t
        })
        .collect();
    ConstructibleExpr::from_terms(terms)
}

struct TermShape {
    l: u32,
    vmu: i64,
    n: i64,
    /// `a + n`
    slope: i64,
    p: Prime,
}

impl TermShape {
    fn w(&self) -> Rational {
        self.p.power(-self.slope)
    }

    /// `H(J) = w^J · P(v(μ) + n·J)` with `Σ_{j ≥ J} = H(J)`.
    fn tail_at(&self, index: &Index) -> Result<ConstructibleExpr> {
        let n_r = Rational::from_integer(self.n.into());
        let tail = tail_polynomial(self.l, &n_r, &self.w());
        Ok(match index {
            Index::Known(j) => {
                let a0 = Rational::from_integer((self.vmu + self.n * j).into());
                let value = crate::sums::eval_poly(&tail, &a0) * self.p.power(-self.slope * j);
                ConstructibleExpr::constant(value)
            }
            Index::Affine { bound, offset } => {
                if self.slope % self.n != 0 {
                    return Err(Error::Unsupported(format!(
                        "fractional exponent {}/{} of a symbolic bound",
                        self.slope, self.n
                    )));
                }
                let power = self.slope / self.n;
                // w^J = p^{-power·offset} · |bound|^power
                let mut extra = CTerm::constant(self.p.power(-power * offset));
                if power > 0 {
                    extra = extra.with_norm(bound.clone(), power as u32);
                } else if power < 0 {
                    extra = extra.with_norm(DTerm::inv(bound.clone()), (-power) as u32);
                }
                let shift = Rational::from_integer((self.vmu + offset).into());
                let coeffs = compose_affine(&tail, &Rational::one(), &shift);
                valuation_polynomial(&coeffs, bound, &extra)
            }
        })
    }

    /// `G(J) = Σ_{j=0}^{J} (v(μ) + n·j)^l` for the ratio-one case.
    fn flat_at(&self, index: &Index) -> ConstructibleExpr {
        let g = flat_sum_polynomial(
            self.l,
            &Rational::from_integer(self.vmu.into()),
            &Rational::from_integer(self.n.into()),
        );
        match index {
            Index::Known(j) => ConstructibleExpr::constant(crate::sums::eval_poly(
                &g,
                &Rational::from_integer((*j).into()),
            )),
            Index::Affine { bound, offset } => {
                let n_inv = Rational::from_integer(self.n.into()).recip();
                let t = Rational::from_integer((*offset).into()) * &n_inv;
                let coeffs = compose_affine(&g, &n_inv, &t);
                valuation_polynomial(&coeffs, bound, &CTerm::constant(Rational::one()))
            }
        }
    }
}

/// One end of the fiber range: the bound, whether it is strict, and its
/// residue pin when the bound is not constant.
fn index_for(
    bound: &DTerm,
    strict: bool,
    is_upper_norm: bool,
    pin: Option<i64>,
    vmu: i64,
    n: i64,
    p: Prime,
) -> Result<Index> {
    let s = i64::from(strict);
    if bound.variables().is_empty() {
        let value = eval_dterm_exact(bound, &[], p)?;
        if value.is_exact() && value.value.is_zero() {
            return Err(Error::ZeroBound);
        }
        let v = value
            .determined_valuation(p)
            .ok_or_else(|| Error::Undetermined(format!("v({bound})")))?;
        let (lo, hi) = if is_upper_norm {
            index_range(Some(v + s), None, vmu, n)
        } else {
            index_range(None, Some(v - s), vmu, n)
        };
        return Ok(Index::Known(lo.or(hi).expect("one side set")));
    }
    let rho = pin.unwrap_or(0);
    let offset = if is_upper_norm {
        let d = (vmu - rho - s).rem_euclid(n);
        s + d - vmu
    } else {
        let d = (rho - s - vmu).rem_euclid(n);
        -s - d - vmu
    };
    Ok(Index::Affine {
        bound: bound.clone(),
        offset,
    })
}

/// Pieces for one term, or `None` when it is not integrable.
fn symbolic_term(term: &PreparedTerm, p: Prime) -> Result<Option<Vec<Piece>>> {
    let cond = term.condition();
    if cond.is_point() || term.delta.is_zero() {
        return Ok(Some(Vec::new()));
    }
    let n = cond.coset.n as i64;
    let vmu = valuation(&cond.coset.mu, p).finite().expect("nonzero coset");
    let shape = TermShape {
        l: term.l,
        vmu,
        n,
        slope: term.a + n,
        p,
    };
    let has_lower = cond.lower.is_some(); // α: caps k from above
    let has_upper = cond.upper.is_some(); // β: bounds k from below
    let integrable = match (has_upper, has_lower) {
        (false, false) => false,
        (true, false) => shape.slope > 0,
        (false, true) => shape.slope < 0,
        (true, true) => true,
    };
    if !integrable {
        return Ok(None);
    }
    let eps = level_set_measure(&cond.coset, p)?.epsilon;
    let scale = eps * p.power(-vmu);
    let symbolic_bounds: Vec<&DTerm> = cond
        .upper
        .iter()
        .chain(cond.lower.iter())
        .filter(|b| !b.variables().is_empty())
        .collect();
    let pin_choices: Vec<Vec<i64>> = if n == 1 {
        vec![vec![0; symbolic_bounds.len()]]
    } else {
        let mut combos = vec![Vec::new()];
        for _ in &symbolic_bounds {
            combos = combos
                .into_iter()
                .flat_map(|c: Vec<i64>| {
                    (0..n).map(move |r| {
                        let mut next = c.clone();
                        next.push(r);
                        next
                    })
                })
                .collect();
        }
        combos
    };
    let mut pieces = Vec::new();
    for combo in pin_choices {
        let mut pins_iter = combo.iter().copied();
        let upper_pin = cond
            .upper
            .as_ref()
            .filter(|b| !b.variables().is_empty())
            .map(|_| pins_iter.next().unwrap());
        let lower_pin = cond
            .lower
            .as_ref()
            .filter(|b| !b.variables().is_empty())
            .map(|_| pins_iter.next().unwrap());
        let j_min = cond
            .upper
            .as_ref()
            .map(|b| index_for(b, cond.upper_strict, true, upper_pin, vmu, n, p))
            .transpose()?;
        let j_max = cond
            .lower
            .as_ref()
            .map(|a| index_for(a, cond.lower_strict, false, lower_pin, vmu, n, p))
            .transpose()?;
        let sum = if shape.slope == 0 {
            let (lo, hi) = (j_min.expect("finite"), j_max.expect("finite"));
            shape.flat_at(&hi).add(&shape.flat_at(&lo.shifted(-1, n)).scale(&-Rational::one()))
        } else {
            let mut acc = ConstructibleExpr::zero();
            if let Some(lo) = &j_min {
                acc = acc.add(&shape.tail_at(lo)?);
            }
            if let Some(hi) = &j_max {
                acc = acc.add(&shape.tail_at(&hi.shifted(1, n))?.scale(&-Rational::one()));
            }
            acc
        };
        let expr = sum.scale(&scale).mul(&term.delta).simplify();
        let mut pins = Vec::new();
        if let (Some(b), Some(r)) = (&cond.upper, upper_pin) {
            if n > 1 {
                pins.push(ResiduePin {
                    bound: b.clone(),
                    residue: r,
                    modulus: n,
                });
            }
        }
        if let (Some(a), Some(r)) = (&cond.lower, lower_pin) {
            if n > 1 {
                pins.push(ResiduePin {
                    bound: a.clone(),
                    residue: r,
                    modulus: n,
                });
            }
        }
        pieces.push(Piece {
            guard: Guard {
                base: term.cell.base(),
                pins,
            },
            expr,
        });
    }
    Ok(Some(pieces))
}

/// `I_m(f)` as a guarded expression over the base variables. Cells whose
/// bounds are not constant are split by the residues of their valuations.
pub fn eliminate_symbolic(integrands: &[CellIntegrand], p: Prime) -> Result<PiecewiseExpr> {
    let mut pieces = Vec::new();
    for ci in integrands {
        for term in &ci.regrouped().terms {
            match symbolic_term(term, p)? {
                Some(ps) => pieces.extend(ps),
                None => return Ok(PiecewiseExpr::nonintegrable()),
            }
        }
    }
    Ok(PiecewiseExpr {
        pieces,
        nonintegrable: false,
    }
    .collapse())
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .base
            .conditions
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_string().replace('t', &format!("x{i}")))
            .collect();
        parts.extend(
            self.pins
                .iter()
                .map(|pin| format!("v({}) = {} mod {}", pin.bound, pin.residue, pin.modulus)),
        );
        write!(f, "{}", parts.join("; "))
    }
}

impl fmt::Display for PiecewiseExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(e) = self.as_single() {
            return write!(f, "{e}");
        }
        for (i, piece) in self.pieces.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "[{}] {}", piece.guard, piece.expr)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{integrate_cell, CellIntegrand};
    use super::*;
    use crate::cells::CellCondition;
    use crate::padic::{int, rat, Coset};

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    fn cell_over_units(fiber: CellCondition) -> Cell {
        let base = CellCondition::new(DTerm::constant(int(0)), Coset::units());
        Cell::new(vec![base, fiber]).unwrap()
    }

    fn integrand(cell: &Cell, a: i64, l: u32) -> CellIntegrand {
        let t = PreparedTerm::new(ConstructibleExpr::constant(int(1)), a, l, cell.clone());
        CellIntegrand::new(cell.clone(), vec![t]).unwrap()
    }

    fn agree(ci: &CellIntegrand, points: &[Rational]) {
        let sym = eliminate_symbolic(std::slice::from_ref(ci), p3()).unwrap();
        for x in points {
            let concrete = integrate_cell(ci, std::slice::from_ref(x), p3()).unwrap().unwrap();
            assert_eq!(sym.eval(std::slice::from_ref(x), p3()).unwrap(), concrete, "x={x} sym={sym}");
        }
    }

    #[test]
    fn constant_bounds_give_numbers() {
        let cell = Cell::univariate(
            CellCondition::new(DTerm::constant(int(0)), Coset::units())
                .with_upper(DTerm::constant(int(1)), false),
        )
        .unwrap();
        let sym = eliminate_symbolic(&[integrand(&cell, 1, 0)], p3()).unwrap();
        assert_eq!(sym.as_single().unwrap().as_constant(), Some(rat(3, 4)));
    }

    #[test]
    fn upper_bound_in_parameter() {
        let cell = cell_over_units(
            CellCondition::new(DTerm::constant(int(0)), Coset::units())
                .with_upper(DTerm::var(0), false),
        );
        let ci = integrand(&cell, 1, 0);
        let sym = eliminate_symbolic(std::slice::from_ref(&ci), p3()).unwrap();
        assert_eq!(sym.to_string(), "3/4 * abs(x0)^2");
        agree(&ci, &[int(1), int(3), rat(1, 9), int(7)]);
        for l in 0..3 {
            agree(&integrand(&cell, 2, l), &[int(1), int(27), rat(2, 3)]);
        }
    }

    #[test]
    fn two_sided_range_and_ratio_one() {
        // |x^3| < |t| ≤ 1 with |t|^{-1}: a polynomial in v(x)
        let cell = cell_over_units(
            CellCondition::new(DTerm::constant(int(0)), Coset::units())
                .with_lower(DTerm::poly(vec![int(0), int(0), int(0), int(1)], DTerm::var(0)), true)
                .with_upper(DTerm::constant(int(1)), false),
        );
        for l in 0..3 {
            let ci = integrand(&cell, -1, l);
            agree(&ci, &[int(1), int(3), int(9), int(81)]);
        }
    }

    #[test]
    fn residue_pins_for_ramified_cosets() {
        let cell = cell_over_units(
            CellCondition::new(DTerm::constant(int(0)), Coset::new(int(3), 2))
                .with_upper(DTerm::var(0), true),
        );
        let ci = integrand(&cell, 2, 1);
        let sym = eliminate_symbolic(std::slice::from_ref(&ci), p3()).unwrap();
        assert!(sym.pieces.iter().all(|pc| pc.guard.pins.len() == 1));
        agree(&ci, &[int(1), int(3), int(9), rat(1, 3), int(2)]);
        let odd = integrand(&cell, 1, 0);
        assert!(matches!(
            eliminate_symbolic(&[odd], p3()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn downward_range() {
        // |x| < |t| with |t|^{-2}
        let cell = cell_over_units(
            CellCondition::new(DTerm::constant(int(0)), Coset::units())
                .with_lower(DTerm::var(0), true),
        );
        let ci = integrand(&cell, -2, 1);
        agree(&ci, &[int(1), int(3), rat(1, 3)]);
        assert!(eliminate_symbolic(&[integrand(&cell, 0, 0)], p3()).unwrap().nonintegrable);
    }
}
