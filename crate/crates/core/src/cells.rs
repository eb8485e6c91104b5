//! Cells over Q_p and exact measures of their fibers.
//!
//! A condition on the variable `t` reads
//! `|α| □ |t - γ| □ |β|` together with `t - γ ∈ μ·P_n`, where each `□` is
//! `<` or `≤` and either bound may be absent. Valuations invert the
//! comparisons: with `k = v(t - γ)` the bounds become `k ≤ v(α)` (or `<`)
//! and `k ≥ v(β)` (or `>`).

use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{eval_dterm, parse_dterm, Approx, DTerm, Precision};
use crate::padic::{
    format_rational, hensel_depth, in_coset, parse_rational, unit_power_residues, valuation,
    Coset, Prime, Rational,
};
use crate::sums::{sum_progression, ProgressionSum};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ConditionJson", into = "ConditionJson")]
pub struct CellCondition {
    /// `α`; the fiber lies outside the disc of radius `|α|`.
    pub lower: Option<DTerm>,
    pub lower_strict: bool,
    /// `β`; the fiber lies inside the disc of radius `|β|`.
    pub upper: Option<DTerm>,
    pub upper_strict: bool,
    pub center: DTerm,
    pub coset: Coset,
}

impl CellCondition {
    /// `t - γ ∈ μ·P_n` with no norm bounds.
    pub fn new(center: DTerm, coset: Coset) -> Self {
        CellCondition {
            lower: None,
            lower_strict: true,
            upper: None,
            upper_strict: true,
            center,
            coset,
        }
    }

    /// The graph `t = γ`.
    pub fn point(center: DTerm) -> Self {
        CellCondition::new(center, Coset::point())
    }

    pub fn with_lower(mut self, alpha: DTerm, strict: bool) -> Self {
        self.lower = Some(alpha);
        self.lower_strict = strict;
        self
    }

    pub fn with_upper(mut self, beta: DTerm, strict: bool) -> Self {
        self.upper = Some(beta);
        self.upper_strict = strict;
        self
    }

    /// The closed ball `{t : v(t - c) ≥ k}` written as a single condition:
    /// with `γ = c - p^{k-1}` every member has `v(t - γ) = k - 1` and
    /// `(t - γ)/p^{k-1} ≡ 1 (mod p)`.
    pub fn ball(c: &Rational, k: i64, p: Prime) -> Self {
        let shift = p.power(k - 1);
        let n = if p.get() == 2 { 1 } else { p.get() - 1 };
        CellCondition::new(DTerm::constant(c - &shift), Coset::new(shift, n))
            .with_lower(DTerm::constant(p.power(k)), true)
            .with_upper(DTerm::constant(p.power(k - 2)), true)
    }

    pub fn is_point(&self) -> bool {
        self.coset.is_point()
    }

    /// Rewrites `≤` bounds as strict ones by moving the bound one valuation
    /// step.
    pub fn normalized(&self, p: Prime) -> CellCondition {
        let mut out = self.clone();
        if let (Some(a), false) = (&self.lower, self.lower_strict) {
            out.lower = Some(DTerm::mul(a.clone(), DTerm::constant(p.power(1))).normalize());
            out.lower_strict = true;
        }
        if let (Some(b), false) = (&self.upper, self.upper_strict) {
            out.upper = Some(DTerm::mul(b.clone(), DTerm::constant(p.power(-1))).normalize());
            out.upper_strict = true;
        }
        out
    }

    pub fn rename(&self, map: &dyn Fn(usize) -> usize) -> CellCondition {
        CellCondition {
            lower: self.lower.as_ref().map(|a| a.rename(map)),
            upper: self.upper.as_ref().map(|b| b.rename(map)),
            center: self.center.rename(map),
            ..self.clone()
        }
    }

    fn terms(&self) -> impl Iterator<Item = &DTerm> {
        self.lower
            .iter()
            .chain(self.upper.iter())
            .chain(std::iter::once(&self.center))
    }

    /// Valuations `k = v(t - γ)` allowed at a base point.
    pub fn valuation_range(&self, base: &[Approx], p: Prime) -> Result<ValuationRange> {
        if self.is_point() {
            return Err(Error::ZeroInput {
                op: "valuation range of a point fiber",
            });
        }
        let bound_valuation = |h: &DTerm| -> Result<i64> {
            let value = eval_dterm(h, base, p)?;
            if value.is_exact() && value.value.is_zero() {
                return Err(Error::ZeroBound);
            }
            value
                .determined_valuation(p)
                .ok_or_else(|| Error::Undetermined(format!("v({h})")))
        };
        let k_max = match &self.lower {
            Some(a) => Some(bound_valuation(a)? - i64::from(self.lower_strict)),
            None => None,
        };
        let k_min = match &self.upper {
            Some(b) => Some(bound_valuation(b)? + i64::from(self.upper_strict)),
            None => None,
        };
        let vmu = valuation(&self.coset.mu, p).finite().expect("nonzero coset");
        let modulus = self.coset.n as i64;
        Ok(ValuationRange {
            k_min,
            k_max,
            residue: vmu.rem_euclid(modulus),
            modulus,
        })
    }

    /// Haar measure of the fiber over a base point.
    pub fn fiber_measure(&self, base: &[Approx], p: Prime) -> Result<Rational> {
        if self.is_point() {
            return Ok(Rational::zero());
        }
        let range = self.valuation_range(base, p)?;
        let Some(k_min) = range.k_min else {
            return Err(Error::InfiniteMeasure);
        };
        let eps = level_set_measure(&self.coset, p)?.epsilon;
        let sum = sum_progression(&ProgressionSum {
            l: 0,
            ratio: p.power(-1),
            residue: range.residue,
            modulus: range.modulus,
            k_min,
            k_max: range.k_max,
        })?;
        Ok(eps * sum)
    }

    /// Decides `point[var] ∈ fiber(point[..var])`. `None` when the
    /// precision of the inputs does not settle the question.
    pub fn classify(&self, var: usize, point: &[Approx], p: Prime) -> Result<Option<bool>> {
        let t = point
            .get(var)
            .ok_or_else(|| Error::Arity(format!("no coordinate for x{var}")))?;
        let gamma = eval_dterm(&self.center, point, p)?;
        let u = Approx {
            value: &t.value - &gamma.value,
            precision: combine(t.precision, gamma.precision),
        };
        if self.is_point() {
            return Ok(match u.precision {
                Precision::Exact => Some(u.value.is_zero()),
                _ => u.determined_valuation(p).map(|_| false),
            });
        }
        let range = match self.valuation_range(point, p) {
            Ok(r) => r,
            Err(Error::Undetermined(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let Some(k) = u.determined_valuation(p) else {
            if u.is_exact() {
                return Ok(Some(false)); // u = 0
            }
            // u may be any element of valuation ≥ the precision
            return Ok(match (u.precision, range.k_max) {
                (Precision::Digits(d), Some(kmax)) if kmax < d => Some(false),
                _ => None,
            });
        };
        if !range.contains(k) {
            return Ok(Some(false));
        }
        if self.coset.n == 1 {
            return Ok(Some(true));
        }
        let depth = hensel_depth(p, self.coset.n);
        match u.precision {
            Precision::Exact => in_coset(&u.value, &self.coset, p, depth).map(Some),
            Precision::Digits(d) if d - k >= depth as i64 => {
                in_coset(&u.value, &self.coset, p, depth).map(Some)
            }
            _ => Ok(None),
        }
    }
}

fn combine(a: Precision, b: Precision) -> Precision {
    match (a, b) {
        (Precision::Lost, _) | (_, Precision::Lost) => Precision::Lost,
        (Precision::Exact, x) | (x, Precision::Exact) => x,
        (Precision::Digits(x), Precision::Digits(y)) => Precision::Digits(x.min(y)),
    }
}

/// `{k : k_min ≤ k ≤ k_max, k ≡ residue (mod modulus)}`; `None` bounds are
/// unbounded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValuationRange {
    pub k_min: Option<i64>,
    pub k_max: Option<i64>,
    pub residue: i64,
    pub modulus: i64,
}

impl ValuationRange {
    pub fn contains(&self, k: i64) -> bool {
        self.k_min.is_none_or(|m| k >= m)
            && self.k_max.is_none_or(|m| k <= m)
            && (k - self.residue).rem_euclid(self.modulus) == 0
    }

    pub fn is_empty(&self) -> bool {
        match (self.k_min, self.k_max) {
            (Some(lo), Some(hi)) => {
                let first = lo + (self.residue - lo).rem_euclid(self.modulus);
                first > hi
            }
            _ => false,
        }
    }

    /// Members in increasing order, when the range is finite.
    pub fn members(&self) -> Option<Vec<i64>> {
        let (lo, hi) = (self.k_min?, self.k_max?);
        let first = lo + (self.residue - lo).rem_euclid(self.modulus);
        Some((first..=hi).step_by(self.modulus as usize).collect())
    }
}

/// `Measure{u : v(u) = k, u ∈ μ·P_n} = epsilon · p^{-k}` on the valuation
/// class, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSetMeasure {
    pub epsilon: Rational,
    pub valuation_class: i64,
}

/// Counts unit n-th power residues at two depths and checks they agree.
pub fn level_set_measure(coset: &Coset, p: Prime) -> Result<LevelSetMeasure> {
    if coset.is_point() {
        return Err(Error::ZeroInput {
            op: "level_set_measure",
        });
    }
    let depth = hensel_depth(p, coset.n);
    let density = |e: u32| -> Result<Rational> {
        let modulus = p
            .u64_power(e)
            .filter(|&m| m <= 1 << 26)
            .ok_or_else(|| Error::Unsupported(format!("residue table mod {p}^{e} too large")))?;
        let count = unit_power_residues(p, coset.n, e).len() as u64;
        Ok(Rational::new(count.into(), modulus.into()))
    };
    let epsilon = density(depth)?;
    let check = density(depth + 1)?;
    if epsilon != check {
        return Err(Error::HenselSelfCheck {
            low: depth,
            high: depth + 1,
        });
    }
    let vmu = valuation(&coset.mu, p).finite().expect("nonzero coset");
    Ok(LevelSetMeasure {
        epsilon,
        valuation_class: vmu.rem_euclid(coset.n as i64),
    })
}

/// A cell: one condition per variable, condition `i` referring only to
/// variables below `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub conditions: Vec<CellCondition>,
}

impl Cell {
    pub fn new(conditions: Vec<CellCondition>) -> Result<Cell> {
        for (i, c) in conditions.iter().enumerate() {
            if let Some(bad) = c.terms().flat_map(DTerm::variables).find(|&v| v >= i) {
                return Err(Error::Arity(format!(
                    "condition on x{i} refers to x{bad}"
                )));
            }
        }
        Ok(Cell { conditions })
    }

    pub fn univariate(cond: CellCondition) -> Result<Cell> {
        Cell::new(vec![cond])
    }

    /// `Z_p` as the ball of radius one around zero.
    pub fn unit_ball(p: Prime) -> Cell {
        Cell {
            conditions: vec![CellCondition::ball(&Rational::zero(), 0, p)],
        }
    }

    pub fn arity(&self) -> usize {
        self.conditions.len()
    }

    /// `1` for stages with a nonzero coset, `0` for graph stages.
    pub fn type_vector(&self) -> Vec<u8> {
        self.conditions
            .iter()
            .map(|c| u8::from(!c.is_point()))
            .collect()
    }

    pub fn last(&self) -> &CellCondition {
        self.conditions.last().expect("cell with no conditions")
    }

    /// Projection onto the first `arity - 1` variables.
    pub fn base(&self) -> Cell {
        Cell {
            conditions: self.conditions[..self.arity().saturating_sub(1)].to_vec(),
        }
    }

    /// Membership with precision tracking: `None` when undecided.
    pub fn classify(&self, point: &[Approx], p: Prime) -> Result<Option<bool>> {
        if point.len() < self.arity() {
            return Err(Error::Arity(format!(
                "point of length {} for a cell of arity {}",
                point.len(),
                self.arity()
            )));
        }
        let mut undecided = false;
        for (i, c) in self.conditions.iter().enumerate() {
            match c.classify(i, point, p)? {
                Some(false) => return Ok(Some(false)),
                Some(true) => {}
                None => undecided = true,
            }
        }
        Ok(if undecided { None } else { Some(true) })
    }

    /// Exact membership; coset tests run at `depth` digits.
    pub fn contains(&self, point: &[Rational], p: Prime, depth: u32) -> Result<bool> {
        for c in &self.conditions {
            let required = hensel_depth(p, c.coset.n);
            if !c.is_point() && depth < required {
                return Err(Error::InsufficientDepth { depth, required });
            }
        }
        let approx: Vec<Approx> = point.iter().cloned().map(Approx::exact).collect();
        self.classify(&approx, p)?
            .ok_or_else(|| Error::Undetermined("cell membership".into()))
    }

    /// Checks at a base point that every stage admits some valuation.
    pub fn is_nonempty_over(&self, base: &[Approx], p: Prime) -> Result<bool> {
        let c = self.last();
        if c.is_point() {
            return Ok(true);
        }
        Ok(!c.valuation_range(base, p)?.is_empty())
    }
}

impl fmt::Display for CellCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            return write!(f, "t = {}", self.center);
        }
        let u = format!("|t - ({})|", self.center);
        let mut parts = Vec::new();
        if let Some(a) = &self.lower {
            let op = if self.lower_strict { "<" } else { "<=" };
            parts.push(format!("|{a}| {op} "));
        }
        parts.push(u);
        if let Some(b) = &self.upper {
            let op = if self.upper_strict { "<" } else { "<=" };
            parts.push(format!(" {op} |{b}|"));
        }
        write!(
            f,
            "{}, t - ({}) in {}·P_{}",
            parts.concat(),
            self.center,
            format_rational(&self.coset.mu),
            self.coset.n
        )
    }
}

#[derive(Serialize, Deserialize)]
struct ConditionJson {
    alpha: Option<String>,
    #[serde(default = "yes")]
    alpha_strict: bool,
    beta: Option<String>,
    #[serde(default = "yes")]
    beta_strict: bool,
    gamma: String,
    mu: String,
    n: u32,
}

fn yes() -> bool {
    true
}

impl TryFrom<ConditionJson> for CellCondition {
    type Error = String;

    fn try_from(j: ConditionJson) -> std::result::Result<Self, String> {
        let term = |s: &str| parse_dterm(s).map_err(|e| format!("{s:?}: {e}"));
        let mu = parse_rational(&j.mu).ok_or_else(|| format!("bad rational {:?}", j.mu))?;
        if j.n == 0 {
            return Err("coset modulus must be positive".into());
        }
        Ok(CellCondition {
            lower: j.alpha.as_deref().map(term).transpose()?,
            lower_strict: j.alpha_strict,
            upper: j.beta.as_deref().map(term).transpose()?,
            upper_strict: j.beta_strict,
            center: term(&j.gamma)?,
            coset: Coset::new(mu, j.n),
        })
    }
}

impl From<CellCondition> for ConditionJson {
    fn from(c: CellCondition) -> Self {
        ConditionJson {
            alpha: c.lower.map(|a| a.to_string()),
            alpha_strict: c.lower_strict,
            beta: c.upper.map(|b| b.to_string()),
            beta_strict: c.upper_strict,
            gamma: c.center.to_string(),
            mu: format_rational(&c.coset.mu),
            n: c.coset.n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::{int, rat};

    fn p(n: u64) -> Prime {
        Prime::new(n).unwrap()
    }

    fn exact(xs: &[Rational]) -> Vec<Approx> {
        xs.iter().cloned().map(Approx::exact).collect()
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(level_set_measure(&Coset::units(), p(3)).unwrap().epsilon, rat(2, 3));
        assert_eq!(level_set_measure(&Coset::new(int(1), 2), p(3)).unwrap().epsilon, rat(1, 3));
        assert_eq!(level_set_measure(&Coset::new(int(1), 2), p(2)).unwrap().epsilon, rat(1, 8));
        assert!(level_set_measure(&Coset::point(), p(3)).is_err());
    }

    #[test]
    fn membership_examples() {
        let c = Cell::univariate(
            CellCondition::new(DTerm::constant(int(0)), Coset::units())
                .with_upper(DTerm::constant(int(1)), true),
        )
        .unwrap();
        assert!(c.contains(&[int(3)], p(3), 1).unwrap());
        assert!(!c.contains(&[int(1)], p(3), 1).unwrap());
        let g = Cell::univariate(CellCondition::point(DTerm::constant(int(5)))).unwrap();
        assert!(g.contains(&[int(5)], p(3), 1).unwrap());
        assert!(!g.contains(&[int(4)], p(3), 1).unwrap());
    }

    #[test]
    fn valuation_range_examples() {
        let cond = CellCondition::new(DTerm::constant(int(0)), Coset::units())
            .with_upper(DTerm::constant(int(1)), false);
        let r = cond.valuation_range(&[], p(3)).unwrap();
        assert_eq!((r.k_min, r.k_max), (Some(0), None));
        let cond = CellCondition::new(DTerm::constant(int(0)), Coset::units())
            .with_lower(DTerm::constant(int(9)), true);
        let r = cond.valuation_range(&[], p(3)).unwrap();
        assert_eq!((r.k_min, r.k_max), (None, Some(1)));
        let cond = CellCondition::new(DTerm::constant(int(0)), Coset::new(int(3), 2))
            .with_lower(DTerm::constant(int(81)), true)
            .with_upper(DTerm::constant(int(1)), true);
        let r = cond.valuation_range(&[], p(3)).unwrap();
        assert_eq!(r.members().unwrap(), vec![1, 3]);
    }

    #[test]
    fn fiber_measure_examples() {
        let zp = CellCondition::new(DTerm::constant(int(0)), Coset::units())
            .with_upper(DTerm::constant(int(1)), false);
        assert_eq!(zp.fiber_measure(&[], p(3)).unwrap(), int(1));
        let squares = CellCondition::new(DTerm::constant(int(0)), Coset::new(int(1), 2))
            .with_upper(DTerm::constant(int(1)), false);
        assert_eq!(squares.fiber_measure(&[], p(3)).unwrap(), rat(3, 8));
        let maximal = CellCondition::new(DTerm::constant(int(0)), Coset::units())
            .with_upper(DTerm::constant(int(1)), true);
        assert_eq!(maximal.fiber_measure(&[], p(3)).unwrap(), rat(1, 3));
        let unbounded = CellCondition::new(DTerm::constant(int(0)), Coset::units());
        assert!(matches!(
            unbounded.fiber_measure(&[], p(3)),
            Err(Error::InfiniteMeasure)
        ));
    }

    #[test]
    fn balls_as_cells() {
        for prime in [2u64, 3, 5] {
            let pr = p(prime);
            let ball = CellCondition::ball(&int(1), 2, pr);
            let modulus = (prime * prime) as i64;
            assert_eq!(ball.fiber_measure(&[], pr).unwrap(), Rational::new(1.into(), modulus.into()));
            let cell = Cell::univariate(ball).unwrap();
            for t in -30i64..30 {
                let inside = (t - 1).rem_euclid(modulus) == 0;
                assert_eq!(cell.contains(&[int(t)], pr, 3).unwrap(), inside, "p={prime} t={t}");
            }
        }
        assert_eq!(Cell::unit_ball(p(3)).last().fiber_measure(&[], p(3)).unwrap(), int(1));
    }

    #[test]
    fn parametrized_fiber() {
        // {(x, t) : |t - x| < |x|, t - x ∈ P_1}
        let cond = CellCondition::new(DTerm::var(0), Coset::units())
            .with_upper(DTerm::var(0), true);
        let base = CellCondition::new(DTerm::constant(int(0)), Coset::units());
        let cell = Cell::new(vec![base, cond.clone()]).unwrap();
        assert!(cell.contains(&[int(3), int(12)], p(3), 1).unwrap());
        assert!(!cell.contains(&[int(3), int(4)], p(3), 1).unwrap());
        assert_eq!(cond.fiber_measure(&exact(&[int(3)]), p(3)).unwrap(), rat(1, 9));
        assert!(Cell::new(vec![cond]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cond = CellCondition::new(DTerm::var(0), Coset::new(rat(1, 3), 2))
            .with_lower(DTerm::constant(int(9)), false);
        let cell = Cell::new(vec![CellCondition::point(DTerm::constant(int(0))), cond]).unwrap();
        let text = serde_json::to_string(&cell).unwrap();
        assert!(text.contains("\"mu\":\"1/3\""));
        let back: Cell = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cell);
    }

    #[test]
    fn approximate_points() {
        let cell = Cell::univariate(
            CellCondition::new(DTerm::constant(int(0)), Coset::units())
                .with_lower(DTerm::constant(int(27)), true),
        )
        .unwrap();
        // t ≡ 0 mod 3^5: v(t) ≥ 5 is excluded by v(t) < 3
        assert_eq!(cell.classify(&[Approx::with_digits(int(0), 5)], p(3)).unwrap(), Some(false));
        assert_eq!(cell.classify(&[Approx::with_digits(int(0), 2)], p(3)).unwrap(), None);
        assert_eq!(cell.classify(&[Approx::with_digits(int(3), 2)], p(3)).unwrap(), Some(true));
    }
}
