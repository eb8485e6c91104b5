//! Univariate cell decomposition of `|f|` for a polynomial `f` over Q.
//!
//! Balls `{v(t - c) ≥ k}` are refined in residue order until each piece is
//! settled: `|f|` is constant on it, or it is a disc around a single root
//! (exact rational, or a Hensel approximation) where
//! `|f(t)| = |δ|·|t - γ|^m`. The number of roots of `h` in the disc is the
//! last index attaining `min_i v(b_i) + i·k` over the Taylor coefficients
//! `b_i` of `h` at `c`.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::cells::{Cell, CellCondition, ValuationRange};
use crate::error::{Error, Result};
use crate::expr::{Approx, ConstructibleExpr, DTerm};
use crate::padic::{
    format_rational, hensel_depth, in_coset, norm, valuation, Coset, ExtendedInt, Prime, Rational,
};
use crate::poly::UniPoly;

/// `δ · |(t - γ)^a μ^{-a}|^{1/n} · v(t - γ)^l` on a cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedTerm {
    /// The factor `|δ|` itself, as a function of the base variables.
    pub delta: ConstructibleExpr,
    pub a: i64,
    pub l: u32,
    pub cell: Cell,
    /// Set on pieces around an approximate root: the identity then only
    /// holds up to translation inside the ball, and pointwise
    /// `v(f) ≥ floor`.
    pub deferred_floor: Option<i64>,
    /// `δ` before taking norms, when known.
    pub raw_delta: Option<Rational>,
}

impl PreparedTerm {
    pub fn new(delta: ConstructibleExpr, a: i64, l: u32, cell: Cell) -> Self {
        PreparedTerm {
            delta,
            a,
            l,
            cell,
            deferred_floor: None,
            raw_delta: None,
        }
    }

    pub fn condition(&self) -> &CellCondition {
        self.cell.last()
    }

    /// Value at a point of the cell (last coordinate is `t`).
    pub fn value_at(&self, point: &[Rational], p: Prime) -> Result<Rational> {
        let m = self.cell.arity() - 1;
        let base = &point[..m];
        let delta = self.delta.eval(base, p)?;
        let cond = self.condition();
        if cond.is_point() {
            return Ok(delta);
        }
        let gamma = crate::expr::eval_dterm_exact(&cond.center, base, p)?;
        if !gamma.is_exact() {
            return Err(Error::Undetermined("center".into()));
        }
        let u = &point[m] - &gamma.value;
        let k = valuation(&u, p)
            .finite()
            .ok_or(Error::ZeroInput { op: "prepared term at its center" })?;
        let vmu = valuation(&cond.coset.mu, p).finite().expect("nonzero coset");
        let n = cond.coset.n as i64;
        let num = self.a * (k - vmu);
        if num % n != 0 {
            return Err(Error::ResiduesNotFixed(format!(
                "exponent {}·({k} - {vmu})/{n} is fractional",
                self.a
            )));
        }
        let scale = p.power(-(num / n));
        let vpow = num_traits::pow(Rational::from_integer(k.into()), self.l as usize);
        Ok(delta * scale * vpow)
    }

    /// `|f|^s` from `|f| = δ·|…|^{a/n}`.
    pub fn power(&self, s: u32) -> PreparedTerm {
        let mut delta = ConstructibleExpr::constant(Rational::one());
        for _ in 0..s {
            delta = delta.mul(&self.delta);
        }
        PreparedTerm {
            delta: delta.simplify(),
            a: self.a * s as i64,
            l: self.l,
            cell: self.cell.clone(),
            deferred_floor: self.deferred_floor.map(|f| f * s as i64),
            raw_delta: self.raw_delta.as_ref().map(|d| num_traits::pow(d.clone(), s as usize)),
        }
    }
}

/// A root of the square-free part of `f` in Q_p.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HenselRoot {
    #[serde(serialize_with = "ser_rational")]
    pub approx: Rational,
    pub multiplicity: u32,
    /// The true root lies within `p^{-precision}`; infinite for exact roots.
    #[serde(serialize_with = "ser_extended")]
    pub precision: ExtendedInt,
    pub certified: bool,
}

fn ser_rational<S: serde::Serializer>(x: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(x))
}

fn ser_extended<S: serde::Serializer>(
    x: &ExtendedInt,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

/// Newton iteration from a seed with `v(f(seed)) > 2·v(f'(seed))` until the
/// root is pinned to `target` digits.
pub fn hensel_lift(f: &UniPoly, p: Prime, seed: &Rational, target: i64) -> Result<HenselRoot> {
    // the criterion only means something for p-integral coefficients
    let f = &f.p_primitive(p);
    let df = f.derivative();
    let vf = valuation(&f.eval(seed), p);
    let vdf = valuation(&df.eval(seed), p);
    let condition = match (vf, vdf) {
        (_, ExtendedInt::Infinity) => false,
        (ExtendedInt::Infinity, _) => true,
        (ExtendedInt::Finite(a), ExtendedInt::Finite(b)) => a > 2 * b,
    };
    if !condition {
        return Err(Error::HenselConditionFails {
            vf: vf.to_string(),
            vdf: vdf.to_string(),
        });
    }
    let vdf = vdf.finite().expect("checked above");
    let mut x = seed.clone();
    // keep the iterate an integer modulo a power of p a little beyond target
    let keep = p.int_power((target + 2 * vdf + 2).max(1) as u32);
    loop {
        let fx = f.eval(&x);
        match valuation(&fx, p) {
            ExtendedInt::Infinity => {
                return Ok(HenselRoot {
                    approx: x,
                    multiplicity: 1,
                    precision: ExtendedInt::Infinity,
                    certified: true,
                })
            }
            ExtendedInt::Finite(v) if v - vdf >= target => {
                return Ok(HenselRoot {
                    approx: x,
                    multiplicity: 1,
                    precision: ExtendedInt::Finite(v - vdf),
                    certified: true,
                })
            }
            _ => {}
        }
        let next = &x - fx / df.eval(&x);
        x = reduce(&next, &keep, p);
    }
}

/// Replaces a p-integral rational by its integer residue.
fn reduce(x: &Rational, modulus: &BigInt, p: Prime) -> Rational {
    if valuation(x, p) < ExtendedInt::Finite(0) {
        return x.clone();
    }
    match crate::padic::residue(x, modulus) {
        Some(r) => Rational::from_integer(r),
        None => x.clone(),
    }
}

fn newton_index(b: &[Rational], k: i64, p: Prime) -> Option<usize> {
    let mut best: Option<(i64, usize)> = None;
    for (i, c) in b.iter().enumerate() {
        if let ExtendedInt::Finite(v) = valuation(c, p) {
            let w = v + i as i64 * k;
            if best.is_none_or(|(m, _)| w <= m) {
                best = Some((w, i));
            }
        }
    }
    best.map(|(_, i)| i)
}

fn lowest_index(b: &[Rational]) -> Option<usize> {
    b.iter().position(|c| !c.is_zero())
}

/// On a piece, `|h| = |coeff|·|t - γ|^mult` and `v(h) = v(coeff) +
/// mult·v(t - γ)`. On a point piece `coeff = h(γ)` and `mult = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorShape {
    pub coeff: Rational,
    pub mult: u32,
    /// Pointwise lower bound on `v(h)` for pieces around an approximate
    /// root, where the shape holds only up to translation.
    pub floor: Option<i64>,
}

impl FactorShape {
    fn exact(coeff: Rational, mult: usize) -> Self {
        FactorShape {
            coeff,
            mult: mult as u32,
            floor: None,
        }
    }
}

/// A cell with the shape of every polynomial of the family on it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyPiece {
    pub cell: Cell,
    pub shapes: Vec<FactorShape>,
}

impl FamilyPiece {
    /// `|h_i|` as a prepared term on this piece.
    pub fn prepared(&self, i: usize, p: Prime) -> PreparedTerm {
        let shape = &self.shapes[i];
        let cond = self.cell.last();
        let n = cond.coset.n as i64;
        let mult = shape.mult as usize;
        let delta = norm(&shape.coeff, p) * num_traits::pow(norm(&cond.coset.mu, p), mult);
        PreparedTerm {
            delta: ConstructibleExpr::constant(delta),
            a: if cond.is_point() { 0 } else { mult as i64 * n },
            l: 0,
            cell: self.cell.clone(),
            deferred_floor: shape.floor,
            raw_delta: Some(shape.coeff.clone()),
        }
    }
}

/// Pieces partitioning the domain, in residue order, and the roots found.
#[derive(Clone, Debug, Default)]
pub struct Decomposition {
    pub pieces: Vec<FamilyPiece>,
    pub roots: Vec<HenselRoot>,
}

impl Decomposition {
    fn extend(&mut self, other: Decomposition) {
        self.pieces.extend(other.pieces);
        self.roots.extend(other.roots);
    }

    fn single(piece: FamilyPiece) -> Self {
        Decomposition {
            pieces: vec![piece],
            roots: Vec::new(),
        }
    }

    /// Prepared terms for the `i`-th polynomial of the family.
    pub fn terms(&self, i: usize, p: Prime) -> Vec<PreparedTerm> {
        self.pieces.iter().map(|piece| piece.prepared(i, p)).collect()
    }
}

struct Domain {
    cond: CellCondition,
    center: Rational,
    range: ValuationRange,
    depth: u32,
}

struct Decomposer<'a> {
    polys: &'a [UniPoly],
    product: UniPoly,
    sqf: UniPoly,
    rational_roots: Vec<Rational>,
    p: Prime,
    domain: Domain,
    limit: i64,
    precision: u32,
    lift_target: i64,
}

fn constant(x: &Rational) -> DTerm {
    DTerm::constant(x.clone())
}

fn univariate(cond: CellCondition) -> Cell {
    Cell {
        conditions: vec![cond],
    }
}

impl Decomposer<'_> {
    fn visit(&self, c: Rational, k: i64) -> Result<Decomposition> {
        let p = self.p;
        let offset = &c - &self.domain.center;
        match valuation(&offset, p) {
            ExtendedInt::Finite(w) if w < k => {
                if !self.domain.range.contains(w) {
                    return Ok(Decomposition::default());
                }
                let coset = &self.domain.cond.coset;
                if coset.n > 1 {
                    if k - w < self.domain.depth as i64 {
                        return self.subdivide(c, k);
                    }
                    if !in_coset(&offset, coset, p, self.domain.depth)? {
                        return Ok(Decomposition::default());
                    }
                }
                self.inside(c, k)
            }
            _ => self.around_domain_center(c, k),
        }
    }

    fn subdivide(&self, c: Rational, k: i64) -> Result<Decomposition> {
        if k + 1 > self.limit {
            return Err(Error::PrecisionExhausted(self.precision));
        }
        let step = self.p.power(k);
        let parts = (0..self.p.get())
            .into_par_iter()
            .map(|j| self.visit(&c + &step * Rational::from_integer(j.into()), k + 1))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Decomposition::default();
        for part in parts {
            out.extend(part);
        }
        Ok(out)
    }

    /// Shapes at an exact point `z` whose disc of level `k` holds no other
    /// root, or `None` if it does.
    fn shapes_at(&self, z: &Rational, k: i64) -> Option<Vec<FactorShape>> {
        let b = self.product.taylor_at(z);
        let i0 = lowest_index(&b).expect("nonzero polynomial");
        if newton_index(&b, k, self.p) != Some(i0) {
            return None;
        }
        Some(
            self.polys
                .iter()
                .map(|h| {
                    let bh = h.taylor_at(z);
                    let m = lowest_index(&bh).expect("nonzero polynomial");
                    FactorShape::exact(bh[m].clone(), m)
                })
                .collect(),
        )
    }

    fn point_piece(&self, z: &Rational) -> FamilyPiece {
        FamilyPiece {
            cell: univariate(CellCondition::point(constant(z))),
            shapes: self
                .polys
                .iter()
                .map(|h| FactorShape::exact(h.eval(z), 0))
                .collect(),
        }
    }

    /// Ball `B(γ_d, k)` around the center of the domain.
    fn around_domain_center(&self, c: Rational, k: i64) -> Result<Decomposition> {
        let p = self.p;
        let d = &self.domain;
        if d.range.k_max.is_some_and(|m| k > m) {
            return Ok(Decomposition::default());
        }
        let Some(shapes) = self.shapes_at(&d.center, k) else {
            return self.subdivide(c, k);
        };
        let mut cond = d.cond.clone();
        if d.range.k_min.is_none_or(|m| m < k) {
            cond.upper = Some(DTerm::constant(p.power(k)));
            cond.upper_strict = false;
        }
        Ok(Decomposition::single(FamilyPiece {
            cell: univariate(cond),
            shapes,
        }))
    }

    /// A ball contained in the domain.
    fn inside(&self, c: Rational, k: i64) -> Result<Decomposition> {
        let p = self.p;
        let b = self.product.taylor_at(&c);
        if newton_index(&b, k, p) == Some(0) {
            return Ok(Decomposition::single(FamilyPiece {
                cell: univariate(CellCondition::ball(&c, k, p)),
                shapes: self
                    .polys
                    .iter()
                    .map(|h| FactorShape::exact(h.eval(&c), 0))
                    .collect(),
            }));
        }
        let in_ball: Vec<&Rational> = self
            .rational_roots
            .iter()
            .filter(|z| valuation(&(*z - &c), p) >= ExtendedInt::Finite(k))
            .collect();
        match in_ball.as_slice() {
            [z] => match self.shapes_at(z, k) {
                Some(shapes) => Ok(self.exact_root_pieces(z, shapes, k)),
                None => self.subdivide(c, k),
            },
            [] => {
                let s = self.sqf.taylor_at(&c);
                if newton_index(&s, k, p) != Some(1) {
                    return self.subdivide(c, k);
                }
                match hensel_lift(&self.sqf, p, &c, self.lift_target) {
                    Ok(root) => Ok(self.approximate_root_pieces(root, &c, k)),
                    Err(Error::HenselConditionFails { .. }) => self.subdivide(c, k),
                    Err(e) => Err(e),
                }
            }
            _ => self.subdivide(c, k),
        }
    }

    fn exact_root_pieces(&self, z: &Rational, shapes: Vec<FactorShape>, k: i64) -> Decomposition {
        let p = self.p;
        let multiplicity = self.product.taylor_at(z).iter().position(|c| !c.is_zero());
        let punctured = CellCondition::new(constant(z), Coset::units())
            .with_upper(DTerm::constant(p.power(k)), false);
        Decomposition {
            pieces: vec![
                FamilyPiece {
                    cell: univariate(punctured),
                    shapes,
                },
                self.point_piece(z),
            ],
            roots: vec![HenselRoot {
                approx: z.clone(),
                multiplicity: multiplicity.unwrap_or(0) as u32,
                precision: ExtendedInt::Infinity,
                certified: true,
            }],
        }
    }

    /// The disc `B(c, k)` holds exactly one root, known to `root.precision`
    /// digits. Outside the residual ball the shapes are exact; inside it
    /// only their distribution is.
    fn approximate_root_pieces(&self, mut root: HenselRoot, c: &Rational, k: i64) -> Decomposition {
        let p = self.p;
        let gamma = root.approx.clone();
        let big_m = root.precision.finite().unwrap_or(self.lift_target);
        // |g| is constant on the disc; read it off at distance p^{-k}
        let probe = &gamma + p.power(k);
        let mut exact = Vec::new();
        let mut deferred = Vec::new();
        for h in self.polys {
            let m = newton_index(&h.taylor_at(c), k, p).expect("nonzero polynomial");
            let coeff = h.eval(&probe) * p.power(-(m as i64) * k);
            let floor = valuation(&coeff, p).finite().expect("no root off center") + m as i64 * big_m;
            exact.push(FactorShape::exact(coeff.clone(), m));
            deferred.push(FactorShape {
                coeff,
                mult: m as u32,
                floor: Some(floor),
            });
        }
        root.multiplicity = newton_index(&self.product.taylor_at(c), k, p).unwrap_or(0) as u32;
        let annulus = CellCondition::new(constant(&gamma), Coset::units())
            .with_lower(DTerm::constant(p.power(big_m)), true)
            .with_upper(DTerm::constant(p.power(k)), false);
        let residual = CellCondition::new(constant(&gamma), Coset::units())
            .with_upper(DTerm::constant(p.power(big_m)), false);
        Decomposition {
            pieces: vec![
                FamilyPiece {
                    cell: univariate(annulus),
                    shapes: exact,
                },
                FamilyPiece {
                    cell: univariate(residual),
                    shapes: deferred,
                },
                self.point_piece(&gamma),
            ],
            roots: vec![root],
        }
    }
}

/// Partitions a one-variable cell into pieces on which every polynomial of
/// the family is prepared. Irrational roots are pinned to a couple of digits
/// beyond the subdivision limit.
pub fn decompose_family(
    polys: &[UniPoly],
    p: Prime,
    domain: &Cell,
    precision: u32,
) -> Result<Decomposition> {
    if polys.is_empty() || polys.iter().any(UniPoly::is_zero) {
        return Err(Error::ZeroPolynomial);
    }
    if domain.arity() != 1 {
        return Err(Error::Arity(format!(
            "univariate decomposition over a cell of arity {}",
            domain.arity()
        )));
    }
    let cond = domain.last().clone();
    let center = crate::expr::eval_dterm_exact(&cond.center, &[], p)?;
    if !center.is_exact() {
        return Err(Error::Undetermined("domain center".into()));
    }
    let center = center.value;
    let product = polys
        .iter()
        .fold(UniPoly::constant(Rational::one()), |acc, h| acc.mul(h));
    let sqf = product.squarefree_part();
    let rational_roots = if sqf.degree() > 0 {
        sqf.rational_roots()?
    } else {
        Vec::new()
    };
    let decomposer = |range: ValuationRange, k_start: i64| Decomposer {
        polys,
        product: product.clone(),
        sqf: sqf.clone(),
        rational_roots: rational_roots.clone(),
        p,
        domain: Domain {
            depth: hensel_depth(p, cond.coset.n),
            cond: cond.clone(),
            center: center.clone(),
            range,
        },
        limit: precision as i64 + k_start.max(0),
        precision,
        lift_target: precision as i64 + k_start.max(0) + 2,
    };
    if cond.is_point() {
        let d = decomposer(
            ValuationRange {
                k_min: None,
                k_max: None,
                residue: 0,
                modulus: 1,
            },
            0,
        );
        return Ok(Decomposition::single(d.point_piece(&center)));
    }
    let range = cond.valuation_range(&[] as &[Approx], p)?;
    let Some(k_start) = range.k_min else {
        return Err(Error::UnboundedDomain(
            "the domain needs an outer norm bound".into(),
        ));
    };
    if range.is_empty() {
        return Ok(Decomposition::default());
    }
    decomposer(range, k_start).visit(center, k_start)
}

/// [`decompose_family`] for a single polynomial.
pub fn decompose_univariate(
    f: &UniPoly,
    p: Prime,
    domain: &Cell,
    precision: u32,
) -> Result<Decomposition> {
    decompose_family(std::slice::from_ref(f), p, domain, precision)
}

/// A residue where the prepared description disagrees with `f`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    #[serde(serialize_with = "ser_rational")]
    pub t: Rational,
    pub reason: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub checked: u64,
    pub failures: Vec<Counterexample>,
    pub pass: bool,
}

/// Checks a prepared description at every residue representative mod
/// `p^N`: each point of the domain lies in exactly one cell (points outside
/// lie in none) and `|f|` matches the prepared value there.
pub fn verify_prepared(
    terms: &[PreparedTerm],
    f: &UniPoly,
    p: Prime,
    precision: u32,
    domain: &Cell,
) -> Result<VerifyReport> {
    const MAX_REPORTED: usize = 20;
    let count = p
        .u64_power(precision)
        .filter(|&c| c <= 1 << 24)
        .ok_or_else(|| Error::Unsupported(format!("{p}^{precision} residues")))?;
    let depth = terms
        .iter()
        .flat_map(|t| t.cell.conditions.iter())
        .chain(domain.conditions.iter())
        .map(|c| hensel_depth(p, c.coset.n))
        .max()
        .unwrap_or(1);
    let check = |r: u64| -> Result<Option<Counterexample>> {
        let t = Rational::from_integer(r.into());
        let point = [t.clone()];
        let in_domain = domain.contains(&point, p, depth)?;
        let mut owners = Vec::new();
        for (i, term) in terms.iter().enumerate() {
            if term.cell.contains(&point, p, depth)? {
                owners.push(i);
            }
        }
        let fail = |reason: String| Ok(Some(Counterexample { t: t.clone(), reason }));
        match (in_domain, owners.as_slice()) {
            (false, []) => Ok(None),
            (false, _) => fail(format!("outside the domain but in cells {owners:?}")),
            (true, []) => fail("in no cell".into()),
            (true, [i]) => {
                let term = &terms[*i];
                let actual = f.eval(&t);
                match term.deferred_floor {
                    Some(floor) => {
                        if valuation(&actual, p) < ExtendedInt::Finite(floor) {
                            return fail(format!("cell {i}: v(f) below the floor {floor}"));
                        }
                        Ok(None)
                    }
                    None => {
                        let expected = term.value_at(&point, p)?;
                        let got = norm(&actual, p);
                        if got != expected {
                            return fail(format!(
                                "cell {i}: |f| = {} but prepared value {}",
                                format_rational(&got),
                                format_rational(&expected)
                            ));
                        }
                        Ok(None)
                    }
                }
            }
            (true, _) => fail(format!("in several cells {owners:?}")),
        }
    };
    let found = (0..count)
        .into_par_iter()
        .map(check)
        .collect::<Result<Vec<_>>>()?;
    let failures: Vec<Counterexample> = found.into_iter().flatten().take(MAX_REPORTED).collect();
    Ok(VerifyReport {
        checked: count,
        pass: failures.is_empty(),
        failures,
    })
}
