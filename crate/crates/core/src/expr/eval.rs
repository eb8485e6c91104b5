use num_traits::Zero;

use super::{graded_monomials, DTerm};
use crate::error::{Error, Result};
use crate::padic::{norm, valuation, ExtendedInt, Prime, Rational};

/// How far an approximate value may be from the true one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Exact,
    /// The true value differs by an element of valuation at least this.
    Digits(i64),
    /// Nothing is known.
    Lost,
}

impl Precision {
    fn min(self, other: Precision) -> Precision {
        match (self, other) {
            (Precision::Lost, _) | (_, Precision::Lost) => Precision::Lost,
            (Precision::Exact, x) | (x, Precision::Exact) => x,
            (Precision::Digits(a), Precision::Digits(b)) => Precision::Digits(a.min(b)),
        }
    }

    fn shift(self, by: ExtendedInt) -> Precision {
        match (self, by) {
            (Precision::Exact, _) => Precision::Exact,
            (_, ExtendedInt::Infinity) => Precision::Exact,
            (Precision::Digits(a), ExtendedInt::Finite(b)) => Precision::Digits(a + b),
            (Precision::Lost, _) => Precision::Lost,
        }
    }

    fn plus(self, other: Precision) -> Precision {
        match (self, other) {
            (Precision::Exact, _) | (_, Precision::Exact) => Precision::Exact,
            (Precision::Lost, _) | (_, Precision::Lost) => Precision::Lost,
            (Precision::Digits(a), Precision::Digits(b)) => Precision::Digits(a + b),
        }
    }
}

/// A rational value together with its error bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Approx {
    pub value: Rational,
    pub precision: Precision,
}

impl Approx {
    pub fn exact(value: Rational) -> Self {
        Approx {
            value,
            precision: Precision::Exact,
        }
    }

    pub fn with_digits(value: Rational, digits: i64) -> Self {
        Approx {
            value,
            precision: Precision::Digits(digits),
        }
    }

    fn lost() -> Self {
        Approx {
            value: Rational::zero(),
            precision: Precision::Lost,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.precision == Precision::Exact
    }

    /// `v(true value)`, when the error bound fixes it.
    pub fn determined_valuation(&self, p: Prime) -> Option<i64> {
        let v = valuation(&self.value, p);
        match (self.precision, v) {
            (Precision::Exact, ExtendedInt::Finite(v)) => Some(v),
            (Precision::Digits(d), ExtendedInt::Finite(v)) if v < d => Some(v),
            _ => None,
        }
    }

    /// `|true value|`, when the error bound fixes it (including exact zero).
    pub fn determined_norm(&self, p: Prime) -> Option<Rational> {
        if self.is_exact() {
            return Some(norm(&self.value, p));
        }
        self.determined_valuation(p).map(|v| p.power(-v))
    }

    fn add(&self, other: &Approx) -> Approx {
        Approx {
            value: &self.value + &other.value,
            precision: self.precision.min(other.precision),
        }
    }

    fn neg(&self) -> Approx {
        Approx {
            value: -&self.value,
            precision: self.precision,
        }
    }

    fn mul(&self, other: &Approx, p: Prime) -> Approx {
        let va = valuation(&self.value, p);
        let vb = valuation(&other.value, p);
        let precision = other
            .precision
            .shift(va)
            .min(self.precision.shift(vb))
            .min(self.precision.plus(other.precision));
        Approx {
            value: &self.value * &other.value,
            precision,
        }
    }

    fn inv(&self, p: Prime) -> Approx {
        if self.is_exact() {
            let value = if self.value.is_zero() {
                Rational::zero()
            } else {
                self.value.recip()
            };
            return Approx::exact(value);
        }
        match (self.determined_valuation(p), self.precision) {
            (Some(v), Precision::Digits(d)) => Approx::with_digits(self.value.recip(), d - 2 * v),
            _ => Approx::lost(),
        }
    }
}

/// Where a series argument lies relative to the unit disc.
enum Disc {
    Inside,
    Outside,
    Unknown,
}

fn locate(a: &Approx, p: Prime) -> Disc {
    let v = valuation(&a.value, p);
    match a.precision {
        Precision::Exact => match v {
            ExtendedInt::Finite(v) if v < 0 => Disc::Outside,
            _ => Disc::Inside,
        },
        Precision::Digits(d) => match v {
            ExtendedInt::Finite(v) if v < 0 && v < d => Disc::Outside,
            _ if d >= 0 && v >= ExtendedInt::Finite(0) => Disc::Inside,
            _ => Disc::Unknown,
        },
        Precision::Lost => Disc::Unknown,
    }
}

/// Evaluates a D-function term. Exact on exact series-free input; series
/// contribute their truncation error, and inexact inputs propagate their
/// error bounds pessimistically.
pub fn eval_dterm(t: &DTerm, point: &[Approx], p: Prime) -> Result<Approx> {
    Ok(match t {
        DTerm::Var(i) => point
            .get(*i)
            .cloned()
            .ok_or_else(|| Error::Arity(format!("x{i} needs a point of length {}", i + 1)))?,
        DTerm::Const(c) => Approx::exact(c.clone()),
        DTerm::Add(a, b) => eval_dterm(a, point, p)?.add(&eval_dterm(b, point, p)?),
        DTerm::Mul(a, b) => eval_dterm(a, point, p)?.mul(&eval_dterm(b, point, p)?, p),
        DTerm::Neg(a) => eval_dterm(a, point, p)?.neg(),
        DTerm::Inv(a) => eval_dterm(a, point, p)?.inv(p),
        DTerm::Poly { coeffs, arg } => {
            let x = eval_dterm(arg, point, p)?;
            let mut acc = Approx::exact(Rational::zero());
            for c in coeffs.iter().rev() {
                acc = acc.mul(&x, p).add(&Approx::exact(c.clone()));
            }
            acc
        }
        DTerm::Series {
            coeffs,
            tail_valuation,
            args,
        } => {
            let xs = args
                .iter()
                .map(|a| eval_dterm(a, point, p))
                .collect::<Result<Vec<_>>>()?;
            let mut inside = true;
            for x in &xs {
                match locate(x, p) {
                    Disc::Inside => {}
                    Disc::Outside => inside = false,
                    Disc::Unknown => return Ok(Approx::lost()),
                }
            }
            if !inside {
                return Ok(Approx::exact(Rational::zero()));
            }
            let arg_precision = xs
                .iter()
                .fold(Precision::Exact, |acc, x| acc.min(x.precision));
            let mut sum = Rational::zero();
            let mut precision = Precision::Digits(*tail_valuation);
            for (c, idx) in coeffs.iter().zip(graded_monomials(xs.len(), coeffs.len())) {
                if c.is_zero() {
                    continue;
                }
                let mut term = c.clone();
                for (x, e) in xs.iter().zip(&idx) {
                    term *= num_traits::pow(x.value.clone(), *e as usize);
                }
                sum += term;
                precision = precision.min(arg_precision.shift(valuation(c, p)));
            }
            Approx {
                value: sum,
                precision,
            }
        }
    })
}

/// [`eval_dterm`] at an exact rational point.
pub fn eval_dterm_exact(t: &DTerm, point: &[Rational], p: Prime) -> Result<Approx> {
    let approx: Vec<Approx> = point.iter().cloned().map(Approx::exact).collect();
    eval_dterm(t, &approx, p)
}

#[cfg(test)]
mod tests {
    use super::super::parse_dterm;
    use super::*;
    use crate::padic::int;

    fn p(n: u64) -> Prime {
        Prime::new(n).unwrap()
    }

    #[test]
    fn inverse_of_zero_is_zero() {
        let t = DTerm::inv(DTerm::Var(0));
        let r = eval_dterm_exact(&t, &[int(0)], p(3)).unwrap();
        assert_eq!(r, Approx::exact(int(0)));
    }

    #[test]
    fn polynomial_is_exact() {
        let t = parse_dterm("x0^2 - 3").unwrap();
        let r = eval_dterm_exact(&t, &[int(3)], p(3)).unwrap();
        assert_eq!(r, Approx::exact(int(6)));
    }

    #[test]
    fn truncated_series_bound() {
        // Σ 3^i x^i truncated after four terms
        let short = parse_dterm("series([1, 3, 9, 27; tail 4], x0)").unwrap();
        let long = parse_dterm("series([1, 3, 9, 27, 81, 243, 729, 2187; tail 8], x0)").unwrap();
        let a = eval_dterm_exact(&short, &[int(1)], p(3)).unwrap();
        let b = eval_dterm_exact(&long, &[int(1)], p(3)).unwrap();
        assert_eq!(a.value, int(40));
        assert_eq!(a.precision, Precision::Digits(4));
        let gap = valuation(&(&b.value - &a.value), p(3));
        assert!(gap >= ExtendedInt::Finite(4));
    }

    #[test]
    fn series_vanishes_outside_unit_disc() {
        let s = parse_dterm("series([1, 1; tail 5], x0)").unwrap();
        let r = eval_dterm_exact(&s, &[Rational::new(1.into(), 3.into())], p(3)).unwrap();
        assert_eq!(r, Approx::exact(int(0)));
    }

    #[test]
    fn short_point_is_an_arity_error() {
        let t = parse_dterm("x0 * x2").unwrap();
        assert!(matches!(
            eval_dterm_exact(&t, &[int(1), int(2)], p(3)),
            Err(Error::Arity(_))
        ));
    }

    #[test]
    fn inexact_inputs_propagate() {
        // x ≡ 1 mod 27: x^2 - 1 known mod 27, and its valuation is not fixed
        let t = parse_dterm("x0^2 - 1").unwrap();
        let r = eval_dterm(&t, &[Approx::with_digits(int(1), 3)], p(3)).unwrap();
        assert_eq!(r.precision, Precision::Digits(3));
        assert_eq!(r.determined_valuation(p(3)), None);
        let r = eval_dterm(&t, &[Approx::with_digits(int(2), 3)], p(3)).unwrap();
        assert_eq!(r.determined_valuation(p(3)), Some(1));
    }
}
