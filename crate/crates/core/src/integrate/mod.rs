//! Elimination of one integration variable over a partition into cells.
//!
//! On a cell with coset `μ·P_n`, the level set `{v(t - γ) = k}` has measure
//! `ε·p^{-k}` for `k ≡ v(μ) (mod n)`, so a prepared term integrates to
//! `ε·δ·Σ_k p^{-a(k - v(μ))/n}·k^l·p^{-k}`. Writing `k = v(μ) + n·j` turns
//! this into `ε·δ·p^{-v(μ)}·Σ_j (v(μ) + n·j)^l·w^j` with `w = p^{-(a+n)}`.

mod reader;
mod simple;
mod symbolic;
mod zeta;

pub use reader::{eliminate_auto, prepare_on_cell, FactorShape as ReadShape};
pub use simple::{
    simple_to_constructible, sum_eliminate_simple, SimpleFunctionExpr, SimpleTerm, Supported,
    ZRange,
};
pub use symbolic::{eliminate_symbolic, Guard, Piece, PiecewiseExpr, ResiduePin};
pub use zeta::{count_roots, igusa_zeta, poincare_check, PoincareReport, ZetaFactor, ZetaRational};

use num_traits::Zero;

use crate::cells::{level_set_measure, Cell};
use crate::decompose::PreparedTerm;
use crate::error::{Error, Result};
use crate::expr::Approx;
use crate::padic::{hensel_depth, valuation, Prime, Rational};
use crate::sums::sum_affine;

/// Prepared terms sharing one cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellIntegrand {
    pub cell: Cell,
    pub terms: Vec<PreparedTerm>,
}

impl CellIntegrand {
    pub fn new(cell: Cell, terms: Vec<PreparedTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.cell != cell) {
            return Err(Error::Schema(format!(
                "term on a different cell: {}",
                t.condition()
            )));
        }
        Ok(CellIntegrand { cell, terms })
    }

    /// Merges terms with the same exponents `a` and `l`.
    pub fn regrouped(&self) -> CellIntegrand {
        let mut out: Vec<PreparedTerm> = Vec::new();
        for t in &self.terms {
            match out.iter_mut().find(|u| {
                u.a == t.a && u.l == t.l && u.deferred_floor.is_none() && t.deferred_floor.is_none()
            }) {
                Some(u) => {
                    u.delta = u.delta.add(&t.delta).simplify();
                    u.raw_delta = None;
                }
                None => out.push(t.clone()),
            }
        }
        out.retain(|t| !t.delta.is_zero());
        CellIntegrand {
            cell: self.cell.clone(),
            terms: out,
        }
    }
}

/// Value of `I_m(f)` at a point: zero with the flag set when some term is
/// not integrable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Integral {
    pub value: Rational,
    pub nonintegrable: bool,
}

impl Integral {
    pub fn zero_nonintegrable() -> Self {
        Integral {
            value: Rational::zero(),
            nonintegrable: true,
        }
    }
}

/// The index range `j` with `k = v(μ) + n·j` inside `[k_min, k_max]`.
pub(crate) fn index_range(
    k_min: Option<i64>,
    k_max: Option<i64>,
    vmu: i64,
    n: i64,
) -> (Option<i64>, Option<i64>) {
    (
        k_min.map(|k| (k - vmu).div_euclid(n) + i64::from((k - vmu).rem_euclid(n) != 0)),
        k_max.map(|k| (k - vmu).div_euclid(n)),
    )
}

fn exact_point(point: &[Rational]) -> Vec<Approx> {
    point.iter().cloned().map(Approx::exact).collect()
}

/// `∫ term dt` over the fiber above `base`; `None` when the sum diverges.
pub fn integrate_term(term: &PreparedTerm, base: &[Rational], p: Prime) -> Result<Option<Rational>> {
    let cond = term.condition();
    if cond.is_point() {
        return Ok(Some(Rational::zero()));
    }
    let delta = term.delta.eval(base, p)?;
    if delta.is_zero() {
        return Ok(Some(Rational::zero()));
    }
    let range = cond.valuation_range(&exact_point(base), p)?;
    if range.is_empty() {
        return Ok(Some(Rational::zero()));
    }
    let eps = level_set_measure(&cond.coset, p)?.epsilon;
    let vmu = valuation(&cond.coset.mu, p).finite().expect("nonzero coset");
    let n = cond.coset.n as i64;
    let (j_min, j_max) = index_range(range.k_min, range.k_max, vmu, n);
    let w = p.power(-(term.a + n));
    let sum = match sum_affine(
        term.l,
        &Rational::from_integer(vmu.into()),
        &Rational::from_integer(n.into()),
        &w,
        j_min,
        j_max,
    ) {
        Ok(s) => s,
        Err(Error::Divergent(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(eps * delta * p.power(-vmu) * sum))
}

fn base_contains(cell: &Cell, base: &[Rational], p: Prime) -> Result<bool> {
    let base_cell = cell.base();
    if base_cell.arity() == 0 {
        return Ok(true);
    }
    let depth = base_cell
        .conditions
        .iter()
        .map(|c| hensel_depth(p, c.coset.n))
        .max()
        .unwrap_or(1);
    base_cell.contains(base, p, depth)
}

/// Integral of one cell's terms over the fiber above `base`. Points of the
/// base outside the cell's projection get zero.
pub fn integrate_cell(ci: &CellIntegrand, base: &[Rational], p: Prime) -> Result<Option<Rational>> {
    if base.len() + 1 != ci.cell.arity() {
        return Err(Error::Arity(format!(
            "base point of length {} for a cell of arity {}",
            base.len(),
            ci.cell.arity()
        )));
    }
    if !base_contains(&ci.cell, base, p)? {
        return Ok(Some(Rational::zero()));
    }
    let mut total = Rational::zero();
    for term in &ci.regrouped().terms {
        match integrate_term(term, base, p)? {
            Some(v) => total += v,
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}

/// `I_m(f)(base)` for `f` given on a partition into cells.
pub fn eliminate_last_variable(
    integrands: &[CellIntegrand],
    base: &[Rational],
    p: Prime,
) -> Result<Integral> {
    let mut total = Rational::zero();
    for ci in integrands {
        match integrate_cell(ci, base, p)? {
            Some(v) => total += v,
            None => return Ok(Integral::zero_nonintegrable()),
        }
    }
    Ok(Integral {
        value: total,
        nonintegrable: false,
    })
}
