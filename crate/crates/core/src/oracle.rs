//! Brute-force integration over residue classes, independent of the cell
//! machinery's summation formulas. Each class `t + p^d Z_p` is classified
//! with tracked precision; classes where membership or the integrand is not
//! determined count towards the boundary mass.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cells::Cell;
use crate::error::{Error, Result};
use crate::expr::{eval_dterm_exact, Approx, ConstructibleExpr};
use crate::padic::{format_rational, valuation, ExtendedInt, Prime, Rational};

pub const DEFAULT_BUDGET: u64 = 10_000_000;
const SEED: u64 = 0x5eed_ce11;

/// Where the integration variables range.
#[derive(Clone, Debug)]
pub enum OracleDomain {
    /// The union of cells, integrating in their last variable.
    Cells(Vec<Cell>),
    /// `Z_p^vars` in the trailing variables.
    Box { vars: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleEstimate {
    #[serde(serialize_with = "ser_rational")]
    pub estimate: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub boundary_mass: Rational,
    /// Largest `|f|` seen on a determined class.
    #[serde(serialize_with = "ser_rational")]
    pub sup: Rational,
    pub classes: u64,
    pub digits: u32,
    /// Set when the class count exceeded the budget and the estimate comes
    /// from stratified samples.
    pub sampled: bool,
}

impl OracleEstimate {
    /// What the undetermined classes can still contribute.
    pub fn gap_bound(&self) -> Rational {
        &self.boundary_mass * &self.sup
    }
}

fn ser_rational<S: serde::Serializer>(x: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(x))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    #[serde(serialize_with = "ser_rational")]
    pub symbolic: Rational,
    pub oracle: OracleEstimate,
    #[serde(serialize_with = "ser_rational")]
    pub gap: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub bound: Rational,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct Oracle {
    pub p: Prime,
    pub budget: u64,
}

/// Running totals over classes; values are per class, before scaling by
/// the class measure.
#[derive(Clone, Debug, Default)]
struct Tally {
    sum: Rational,
    boundary: u64,
    sup: Rational,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.sum += other.sum;
        self.boundary += other.boundary;
        if other.sup > self.sup {
            self.sup = other.sup;
        }
        self
    }

    fn record(&mut self, outcome: Option<Rational>) {
        match outcome {
            None => self.boundary += 1,
            Some(v) => {
                let a = v.abs();
                if a > self.sup {
                    self.sup = a;
                }
                self.sum += v;
            }
        }
    }
}

impl Oracle {
    /// Budget from `PADIC_CELLS_BUDGET` when set.
    pub fn new(p: Prime) -> Self {
        let budget = std::env::var("PADIC_CELLS_BUDGET")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(DEFAULT_BUDGET);
        Oracle { p, budget }
    }

    pub fn with_budget(p: Prime, budget: u64) -> Self {
        Oracle { p, budget }
    }

    /// Smallest valuation of the integration variable over the cells.
    fn cells_offset(&self, cells: &[Cell], base: &[Rational]) -> Result<i64> {
        let approx: Vec<Approx> = base.iter().cloned().map(Approx::exact).collect();
        let mut offset: Option<i64> = None;
        for cell in cells {
            let cond = cell.last();
            if cond.is_point() {
                continue;
            }
            let range = match cond.valuation_range(&approx, self.p) {
                Ok(r) => r,
                Err(Error::ZeroBound) => continue,
                Err(e) => return Err(e),
            };
            if range.is_empty() {
                continue;
            }
            let k_min = range.k_min.ok_or_else(|| {
                Error::UnboundedDomain(format!("the fiber of {cond} is not bounded"))
            })?;
            let center = eval_dterm_exact(&cond.center, base, self.p)?;
            let low = match valuation(&center.value, self.p) {
                ExtendedInt::Finite(v) if center.is_exact() => v.min(k_min),
                ExtendedInt::Infinity if center.is_exact() => k_min,
                _ => return Err(Error::Undetermined(format!("center {}", cond.center))),
            };
            offset = Some(offset.map_or(low, |o: i64| o.min(low)));
        }
        Ok(offset.unwrap_or(0))
    }

    /// `∫ f` over the domain above `base`, from classes of `digits` digits
    /// below the domain's top valuation.
    pub fn integrate(
        &self,
        f: &ConstructibleExpr,
        domain: &OracleDomain,
        base: &[Rational],
        digits: u32,
    ) -> Result<OracleEstimate> {
        let p = self.p;
        let (vars, offset) = match domain {
            OracleDomain::Cells(cells) => (1usize, self.cells_offset(cells, base)?),
            OracleDomain::Box { vars } => (*vars, 0),
        };
        let side = p
            .u64_power(digits)
            .ok_or_else(|| Error::Unsupported(format!("{p}^{digits} classes per variable", p = p.get())))?;
        let total = (side as u128).checked_pow(vars as u32);
        let scale = p.power(offset);
        let prec = offset + digits as i64;
        let classify = |coords: &[u64]| -> Result<Option<Rational>> {
            let mut point: Vec<Approx> = base.iter().cloned().map(Approx::exact).collect();
            point.extend(coords.iter().map(|&r| {
                Approx::with_digits(&scale * Rational::from_integer(BigInt::from(r)), prec)
            }));
            let inside = match domain {
                OracleDomain::Box { .. } => 1usize,
                OracleDomain::Cells(cells) => {
                    let mut count = 0;
                    for cell in cells {
                        match cell.classify(&point, p)? {
                            Some(true) => count += 1,
                            Some(false) => {}
                            None => return Ok(None),
                        }
                    }
                    count
                }
            };
            if inside == 0 {
                return Ok(Some(Rational::zero()));
            }
            match f.eval_approx(&point, p) {
                Ok(v) => Ok(Some(v * Rational::from_integer(inside.into()))),
                Err(Error::Undetermined(_)) | Err(Error::ValuationOfZero) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let decode = |mut idx: u128| -> Vec<u64> {
            (0..vars)
                .map(|_| {
                    let r = (idx % side as u128) as u64;
                    idx /= side as u128;
                    r
                })
                .collect()
        };
        let run = |coords: &[Vec<u64>]| -> Result<Tally> {
            coords
                .par_iter()
                .try_fold(Tally::default, |mut acc, c| {
                    acc.record(classify(c)?);
                    Ok::<_, Error>(acc)
                })
                .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
        };
        // each class has measure p^{-prec} per variable
        let class_measure = p.power(-prec * vars as i64);
        if let Some(t) = total.filter(|&t| t <= self.budget as u128) {
            let tally = (0..t as u64)
                .into_par_iter()
                .try_fold(Tally::default, |mut acc, i| {
                    acc.record(classify(&decode(i as u128))?);
                    Ok::<_, Error>(acc)
                })
                .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
            return Ok(OracleEstimate {
                estimate: &tally.sum * &class_measure,
                boundary_mass: Rational::from_integer(tally.boundary.into()) * &class_measure,
                sup: tally.sup,
                classes: t as u64,
                digits,
                sampled: false,
            });
        }
        // Stratified by the valuation shell of the first coordinate: shell
        // j < digits holds p^j·(unit), the last shell is the zero class.
        let per_shell = (self.budget / (digits as u64 + 1)).max(1);
        let pu = p.get() as u64;
        let others = Rational::from_integer(BigInt::from(side).pow(vars as u32 - 1));
        let mut estimate = Rational::zero();
        let mut boundary = Rational::zero();
        let mut sup = Rational::zero();
        for j in 0..=digits {
            let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ ((digits as u64) << 32) ^ j as u64);
            let shell_step = p.u64_power(j).expect("below side");
            let rest = p.u64_power(digits.saturating_sub(j + 1)).expect("below side");
            let draws: Vec<Vec<u64>> = (0..per_shell)
                .map(|_| {
                    let first = if j == digits {
                        0
                    } else {
                        shell_step * (rng.gen_range(1..pu) + pu * rng.gen_range(0..rest))
                    };
                    std::iter::once(first)
                        .chain((1..vars).map(|_| rng.gen_range(0..side)))
                        .collect()
                })
                .collect();
            let tally = run(&draws)?;
            let shell_classes = if j == digits {
                Rational::from_integer(1.into())
            } else {
                Rational::from_integer(((pu - 1) * rest).into())
            };
            let weight = shell_classes * &others * &class_measure
                / Rational::from_integer(per_shell.into());
            estimate += &tally.sum * &weight;
            boundary += Rational::from_integer(tally.boundary.into()) * &weight;
            if tally.sup > sup {
                sup = tally.sup;
            }
        }
        Ok(OracleEstimate {
            estimate,
            boundary_mass: boundary,
            sup,
            classes: per_shell * (digits as u64 + 1),
            digits,
            sampled: true,
        })
    }

    /// Measure of the union of cells above `base`.
    pub fn measure(&self, cells: &[Cell], base: &[Rational], digits: u32) -> Result<OracleEstimate> {
        let one = ConstructibleExpr::constant(Rational::from_integer(1.into()));
        self.integrate(&one, &OracleDomain::Cells(cells.to_vec()), base, digits)
    }

    /// Raises the digits two at a time until the boundary mass drops below
    /// `tol`, returning the finest estimate.
    pub fn stabilize(
        &self,
        f: &ConstructibleExpr,
        domain: &OracleDomain,
        base: &[Rational],
        start: u32,
        max: u32,
        tol: &Rational,
    ) -> Result<OracleEstimate> {
        let mut digits = start;
        loop {
            let est = self.integrate(f, domain, base, digits)?;
            if est.boundary_mass < *tol {
                return Ok(est);
            }
            if digits + 2 > max {
                return Err(Error::DidNotStabilize {
                    mass: est.boundary_mass,
                    n: digits,
                });
            }
            digits += 2;
        }
    }

    /// Compares a claimed value with the oracle: the gap must lie within
    /// boundary mass times the largest observed `|f|`.
    pub fn verify(
        &self,
        f: &ConstructibleExpr,
        domain: &OracleDomain,
        base: &[Rational],
        digits: u32,
        claimed: &Rational,
    ) -> Result<VerificationReport> {
        let oracle = self.integrate(f, domain, base, digits)?;
        let gap = (claimed - &oracle.estimate).abs();
        let bound = oracle.gap_bound();
        Ok(VerificationReport {
            symbolic: claimed.clone(),
            pass: gap <= bound,
            oracle,
            gap,
            bound,
        })
    }
}

impl VerificationReport {
    /// `{"symbolic", "oracle", "bound", "pass"}`, plus `"sampled": true`
    /// when the oracle sampled.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "symbolic": format_rational(&self.symbolic),
            "oracle": format_rational(&self.oracle.estimate),
            "bound": format_rational(&self.bound),
            "pass": self.pass,
        });
        if self.oracle.sampled {
            v["sampled"] = serde_json::Value::Bool(true);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellCondition;
    use crate::expr::{parse_constructible, DTerm};
    use crate::padic::{int, rat, Coset};

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    fn expr(s: &str) -> ConstructibleExpr {
        parse_constructible(s).unwrap()
    }

    #[test]
    fn box_integral_of_norm() {
        let oracle = Oracle::with_budget(p3(), 1_000_000);
        let est = oracle.integrate(&expr("abs(x0)"), &OracleDomain::Box { vars: 1 }, &[], 6).unwrap();
        assert_eq!(est.boundary_mass, p3().power(-6));
        let gap = (rat(3, 4) - &est.estimate).abs();
        assert!(gap <= est.gap_bound());
        assert!(!est.sampled);
    }

    #[test]
    fn two_variables() {
        let oracle = Oracle::with_budget(p3(), 1_000_000);
        let r = oracle
            .verify(&expr("abs(x0 - x1)"), &OracleDomain::Box { vars: 2 }, &[], 4, &rat(3, 4))
            .unwrap();
        assert!(r.pass, "{r:?}");
        let wrong = oracle
            .verify(&expr("abs(x0 - x1)"), &OracleDomain::Box { vars: 2 }, &[], 4, &rat(2, 3))
            .unwrap();
        assert!(!wrong.pass);
    }

    #[test]
    fn cells_and_measure() {
        let oracle = Oracle::with_budget(p3(), 1_000_000);
        let squares = Cell::univariate(
            CellCondition::new(DTerm::constant(int(0)), Coset::new(int(1), 2))
                .with_upper(DTerm::constant(int(1)), false),
        )
        .unwrap();
        let est = oracle.measure(std::slice::from_ref(&squares), &[], 7).unwrap();
        assert!((rat(3, 8) - &est.estimate).abs() <= est.boundary_mass);
        // a fiber above a parameter: {|t| ≤ |x|}, x = 9
        let base = CellCondition::new(DTerm::constant(int(0)), Coset::units());
        let fiber = CellCondition::new(DTerm::constant(int(0)), Coset::units())
            .with_upper(DTerm::var(0), false);
        let cell = Cell::new(vec![base, fiber]).unwrap();
        let est = oracle.measure(&[cell], &[int(9)], 6).unwrap();
        assert!((rat(1, 9) - &est.estimate).abs() <= est.boundary_mass);
    }

    #[test]
    fn unbounded_fiber_is_rejected() {
        let oracle = Oracle::with_budget(p3(), 1000);
        let open = Cell::univariate(CellCondition::new(DTerm::constant(int(0)), Coset::units())).unwrap();
        assert!(matches!(oracle.measure(&[open], &[], 3), Err(Error::UnboundedDomain(_))));
    }

    #[test]
    fn sampling_beyond_budget() {
        let oracle = Oracle::with_budget(p3(), 20_000);
        let est = oracle.integrate(&expr("abs(x0)"), &OracleDomain::Box { vars: 1 }, &[], 12).unwrap();
        assert!(est.sampled);
        // |t| is constant on each shell, so only the zero class is missing
        assert_eq!(est.boundary_mass, p3().power(-12));
        assert!((rat(3, 4) - &est.estimate).abs() <= est.gap_bound());
    }

    #[test]
    fn stabilization() {
        let oracle = Oracle::with_budget(p3(), 1_000_000);
        let est = oracle
            .stabilize(&expr("abs(x0)"), &OracleDomain::Box { vars: 1 }, &[], 2, 10, &rat(1, 1000))
            .unwrap();
        assert_eq!(est.digits, 8);
        assert!((rat(3, 4) - &est.estimate).abs() <= est.gap_bound());
        let flat = Cell::unit_ball(p3());
        let est = oracle
            .stabilize(&expr("1"), &OracleDomain::Cells(vec![flat]), &[], 2, 10, &rat(1, 1000))
            .unwrap();
        assert_eq!((est.digits, est.estimate), (2, int(1)));
        let tight = oracle.stabilize(&expr("abs(x0)"), &OracleDomain::Box { vars: 1 }, &[], 2, 4, &rat(1, 1_000_000));
        assert!(matches!(tight, Err(Error::DidNotStabilize { .. })));
    }
}
