//! Acceptance suite: one PASS/FAIL line per criterion. Expected values are
//! either closed forms or computed here by direct enumeration and partial
//! summation, independently of the engine's formulas.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_traits::{One, Signed, Zero};
use padic_cells::cells::{level_set_measure, Cell, CellCondition};
use padic_cells::cli::{symbolic_integral, CellsSpec, Mode, Problem};
use padic_cells::decompose::{decompose_univariate, verify_prepared};
use padic_cells::expr::{parse_constructible, ConstructibleExpr, DTerm};
use padic_cells::integrate::{
    eliminate_auto, eliminate_last_variable, eliminate_symbolic, igusa_zeta, prepare_on_cell,
    sum_eliminate_simple, CellIntegrand, SimpleFunctionExpr, SimpleTerm, ZetaFactor, ZRange,
};
use padic_cells::oracle::{Oracle, OracleDomain};
use padic_cells::padic::{hensel_depth, int, rat, Coset, Prime, Rational};
use padic_cells::poly::UniPoly;
use padic_cells::sums::{eval_poly, faulhaber, sum_progression, ProgressionSum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn prime(p: u64) -> Prime {
    Prime::new(p).unwrap()
}

fn expr(s: &str) -> ConstructibleExpr {
    parse_constructible(s).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn engine_value(problem: &Problem) -> std::result::Result<Rational, String> {
    let r = symbolic_integral(problem, 8).map_err(|e| e.to_string())?;
    ensure(!r.nonintegrable, || "unexpectedly nonintegrable".into())?;
    r.as_single()
        .and_then(|e| e.as_constant())
        .ok_or_else(|| format!("not a constant: {r}"))
}

/// 1. Exact integrals over Z_3 with oracle agreement at N = 6.
fn exact_values() -> Check {
    let p = prime(3);
    let oracle = Oracle::with_budget(p, 10_000_000);
    let squares = Cell::univariate(
        CellCondition::new(DTerm::constant(int(0)), Coset::new(int(1), 2))
            .with_upper(DTerm::constant(int(1)), false),
    )
    .unwrap();
    let cases: Vec<(&str, CellsSpec, Rational)> = vec![
        ("abs(x0)", CellsSpec::Auto, rat(3, 4)),
        ("abs(x0^2)", CellsSpec::Auto, rat(9, 13)),
        ("1", CellsSpec::List(vec![squares]), rat(3, 8)),
    ];
    let tol = p.power(-4);
    let mut notes = Vec::new();
    for (integrand, cells, expected) in cases {
        let start = Instant::now();
        let domain = match &cells {
            CellsSpec::Auto => OracleDomain::Box { vars: 1 },
            CellsSpec::List(c) => OracleDomain::Cells(c.clone()),
        };
        let problem = Problem {
            p,
            params: 0,
            integrate: 1,
            integrand: Some(expr(integrand)),
            polynomial: None,
            cells,
            mode: Mode::Symbolic,
            base_points: vec![vec![]],
        };
        let value = engine_value(&problem)?;
        ensure(value == expected, || format!("{integrand}: engine {value}, expected {expected}"))?;
        let est = oracle
            .integrate(&expr(integrand), &domain, &[], 6)
            .map_err(|e| e.to_string())?;
        ensure(!est.sampled, || "oracle sampled".into())?;
        let gap = (&value - &est.estimate).abs();
        ensure(gap <= tol, || format!("{integrand}: oracle gap {gap} > 3^-4"))?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(1), || format!("{integrand}: took {elapsed:?}"))?;
        notes.push(format!("{expected} ({} ms)", elapsed.as_millis()));
    }
    Ok(notes.join(", "))
}

/// `∫_{Z_p} |f|^s` by eliminating over the decomposition's cells.
fn direct_power_integral(f: &UniPoly, p: Prime, s: u32) -> Rational {
    let dec = decompose_univariate(f, p, &Cell::unit_ball(p), 8).unwrap();
    let cis: Vec<CellIntegrand> = dec
        .terms(0, p)
        .into_iter()
        .map(|t| {
            let cell = t.cell.clone();
            CellIntegrand::new(cell, vec![t.power(s)]).unwrap()
        })
        .collect();
    let r = eliminate_last_variable(&cis, &[], p).unwrap();
    assert!(!r.nonintegrable);
    r.value
}

/// 2. Zeta functions of t and t² against direct elimination.
fn zeta_functions() -> Check {
    for pv in [3u64, 5] {
        let p = prime(pv);
        for (coeffs, d) in [(vec![0, 1], 1i64), (vec![0, 0, 1], 2)] {
            let f = UniPoly::from_ints(&coeffs);
            let z = igusa_zeta(&f, p, 8).map_err(|e| e.to_string())?;
            let expected_num = vec![Rational::one() - p.power(-1)];
            ensure(
                z.numerator == expected_num
                    && z.numerator_shift == 0
                    && z.denominator_factors == vec![ZetaFactor { c: 1, d }],
                || format!("p={pv} deg={d}: got {z}"),
            )?;
            for s in 1..=2u32 {
                let t = p.power(-(s as i64));
                let closed = (Rational::one() - p.power(-1))
                    / (Rational::one() - num_traits::pow(t.clone(), d as usize) / p.power(1));
                let via_zeta = z.eval(&t).map_err(|e| e.to_string())?;
                let direct = direct_power_integral(&f, p, s);
                ensure(via_zeta == direct && direct == closed, || {
                    format!("p={pv} deg={d} s={s}: zeta {via_zeta}, direct {direct}, closed {closed}")
                })?;
            }
        }
    }
    Ok("t and t^2 for p = 3, 5 at T = p^-1, p^-2".into())
}

/// 3. Decomposition soundness on a fixed corpus.
fn decomposition_soundness() -> Check {
    let corpus: [(&[i64], u64); 20] = [
        (&[0, 1], 3),
        (&[-1, 0, 1], 3),
        (&[0, 0, 1], 3),
        (&[1, 0, 1], 5),
        (&[7, 0, 1], 2),
        (&[-2, 0, 1], 3),
        (&[-3, 0, 1], 3),
        (&[2, -3, 1], 2),
        (&[0, -1, 0, 1], 3),
        (&[-4, 0, 0, 0, 1], 5),
        (&[1, 2, 1], 2),
        (&[-8, 0, 0, 1], 2),
        (&[5], 3),
        (&[9, -6, 1], 3),
        (&[-1, 1, 1, 1, 1], 5),
        (&[6, -5, 1], 5),
        (&[2, 0, 0, 9], 3),
        (&[-9, 0, 1, 0, 1], 3),
        (&[3, 1, 0, -2, 4], 2),
        (&[0, 0, 4, -4, 1], 5),
    ];
    let start = Instant::now();
    let mut cells = 0;
    for (coeffs, pv) in corpus {
        let p = prime(pv);
        let f = UniPoly::from_ints(coeffs);
        let domain = Cell::unit_ball(p);
        let dec = decompose_univariate(&f, p, &domain, 8).map_err(|e| format!("{coeffs:?}: {e}"))?;
        cells += dec.pieces.len();
        let report = verify_prepared(&dec.terms(0, p), &f, p, 6, &domain).map_err(|e| e.to_string())?;
        ensure(report.pass, || format!("{coeffs:?} over p={pv}: {:?}", report.failures.first()))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("20 polynomials, {cells} cells, {} ms", elapsed.as_millis()))
}

fn iterated(integrand: &str, p: Prime) -> std::result::Result<Rational, String> {
    let inner = eliminate_auto(&expr(integrand), 2, p, 8).map_err(|e| e.to_string())?;
    ensure(!inner.nonintegrable, || format!("{integrand}: nonintegrable"))?;
    let outer = eliminate_auto(&inner.as_single().unwrap(), 1, p, 8).map_err(|e| e.to_string())?;
    ensure(!outer.nonintegrable, || format!("{integrand}: nonintegrable"))?;
    outer
        .as_single()
        .and_then(|e| e.as_constant())
        .ok_or_else(|| format!("{integrand}: not constant"))
}

/// 4. Both elimination orders agree on product integrands.
fn fubini() -> Check {
    let pairs: [(&str, &str, u64); 10] = [
        ("abs(X)", "abs(X^2)", 3),
        ("v(X)", "abs(X - 1)", 3),
        ("abs(X^2 - 1)", "abs(X)^2", 3),
        ("v(X - 2)^2", "abs(X^3)", 5),
        ("abs(X*(X - 1)*(X - 2))", "v(X)", 3),
        ("abs(X^2 + 1)", "abs(X^2 - 2)", 5),
        ("abs(X^2 + 7)", "v(X + 1)", 2),
        ("3 * abs(X - 4)", "abs(X^2 - 3)", 3),
        ("v(X^2 - 1)", "abs(X^3 - X)", 2),
        ("abs(X)^3 * v(X)", "abs(inv(X - 1/5))", 5),
    ];
    for (u, w, pv) in pairs {
        let p = prime(pv);
        let at = |s: &str, i: usize| s.replace('X', &format!("x{i}"));
        let forward = iterated(&format!("{} * {}", at(u, 0), at(w, 1)), p)?;
        let backward = iterated(&format!("{} * {}", at(u, 1), at(w, 0)), p)?;
        ensure(forward == backward, || format!("{u} ⊗ {w}: {forward} vs {backward}"))?;
        let one_var = |s: &str| -> std::result::Result<Rational, String> {
            let r = eliminate_auto(&expr(&at(s, 0)), 1, p, 8).map_err(|e| e.to_string())?;
            r.as_single()
                .and_then(|e| e.as_constant())
                .ok_or_else(|| format!("{s}: not constant"))
        };
        let product = one_var(u)? * one_var(w)?;
        ensure(forward == product, || format!("{u} ⊗ {w}: {forward} vs product {product}"))?;
    }
    Ok("10 products, both orders equal the product of marginals".into())
}

/// 5. Nonintegrable integrands give exactly 0 with the flag.
fn zero_convention() -> Check {
    let p = prime(3);
    let punctured = Cell::univariate(
        CellCondition::new(DTerm::constant(int(0)), Coset::units())
            .with_upper(DTerm::constant(int(1)), false),
    )
    .unwrap();
    let outer = Cell::univariate(
        CellCondition::new(DTerm::constant(int(1)), Coset::units())
            .with_upper(DTerm::constant(int(1)), false)
            .with_lower(DTerm::constant(int(3)), false),
    )
    .unwrap();
    let good = prepare_on_cell(&expr("abs(x0 - 1)"), &outer, p).unwrap();
    for bad in ["abs(inv(x0))", "v(x0) * abs(inv(x0))", "abs(inv(x0^2))", "abs(inv(x0)) + abs(x0)"] {
        let ci = prepare_on_cell(&expr(bad), &punctured, p).map_err(|e| e.to_string())?;
        for order in [vec![ci.clone(), good.clone()], vec![good.clone(), ci.clone()]] {
            let r = eliminate_last_variable(&order, &[], p).map_err(|e| e.to_string())?;
            ensure(r.nonintegrable && r.value.is_zero(), || format!("{bad}: {r:?}"))?;
            let s = eliminate_symbolic(&order, p).map_err(|e| e.to_string())?;
            ensure(s.nonintegrable && s.pieces.is_empty(), || format!("{bad}: symbolic {s}"))?;
        }
        let auto = eliminate_auto(&expr(bad), 1, p, 8).map_err(|e| e.to_string())?;
        ensure(auto.nonintegrable, || format!("{bad}: auto integrable"))?;
    }
    Ok("4 integrands, concrete, symbolic and auto".into())
}

/// `Σ_{i≥0} (K+i)^l ρ^{K+i}` ≤ `K^l ρ^K / (1 - ((K+1)/K)^l ρ)`, for K ≥ 1.
fn tail_bound(k: i64, l: u32, rho: &Rational) -> Rational {
    let kr = Rational::from_integer(k.into());
    let step = num_traits::pow((&kr + Rational::one()) / &kr, l as usize) * rho;
    assert!(step < Rational::one());
    num_traits::pow(kr, l as usize) * num_traits::pow(rho.clone(), k as usize) / (Rational::one() - step)
}

/// 6. Progression sums against partial sums and Faulhaber polynomials.
fn sum_closed_forms() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..50 {
        let num: i64 = rng.gen_range(1..=4);
        let den: i64 = rng.gen_range(2 * num + 1..=2 * num + 12);
        let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
        let s = ProgressionSum {
            l: rng.gen_range(0..=3),
            ratio: rat(sign * num, den),
            modulus: rng.gen_range(1..=4),
            residue: rng.gen_range(0..4),
            k_min: rng.gen_range(-5..=5),
            k_max: None,
        };
        let closed = sum_progression(&s).map_err(|e| e.to_string())?;
        let partial: Rational = (s.k_min..=60)
            .filter(|k| (k - s.residue).rem_euclid(s.modulus) == 0)
            .map(|k| {
                num_traits::pow(int(k), s.l as usize) * pow_signed(&s.ratio, k)
            })
            .sum();
        let bound = tail_bound(61, s.l, &s.ratio.abs());
        let gap = (&closed - &partial).abs();
        ensure(gap <= bound, || format!("case {case} {s:?}: gap {gap} > {bound}"))?;
    }
    for l in 0..=5u32 {
        let poly = faulhaber(l);
        ensure(poly.len() <= l as usize + 2, || format!("degree of F_{l}"))?;
        for (lo, hi, modulus) in [(-7i64, 12i64, 1i64), (0, 40, 1), (3, 29, 3), (-20, -2, 2)] {
            let s = ProgressionSum {
                l,
                ratio: Rational::one(),
                residue: lo,
                modulus,
                k_min: lo,
                k_max: Some(hi),
            };
            let closed = sum_progression(&s).map_err(|e| e.to_string())?;
            let direct: Rational = (lo..=hi)
                .step_by(modulus as usize)
                .map(|k| num_traits::pow(int(k), l as usize))
                .sum();
            ensure(closed == direct, || format!("flat l={l} [{lo},{hi}] step {modulus}: {closed} vs {direct}"))?;
            if modulus == 1 {
                let f = eval_poly(&poly, &int(hi)) - eval_poly(&poly, &int(lo - 1));
                ensure(f == direct, || format!("Faulhaber l={l} [{lo},{hi}]"))?;
            }
        }
    }
    Ok("50 convergent sums within tail bound, ratio-one branch exact".into())
}

fn pow_signed(r: &Rational, k: i64) -> Rational {
    if k >= 0 {
        num_traits::pow(r.clone(), k as usize)
    } else {
        num_traits::pow(r.recip(), (-k) as usize)
    }
}

/// Distinct `u^n mod p^e` over units, by enumeration.
fn count_unit_powers(p: u64, n: u32, e: u32) -> u64 {
    let m = p.pow(e);
    let mut seen = HashSet::new();
    for u in (0..m).filter(|u| u % p != 0) {
        let mut acc = 1u64;
        for _ in 0..n {
            acc = acc * u % m;
        }
        seen.insert(acc);
    }
    seen.len() as u64
}

/// 7. Level-set densities against residue counts at two moduli.
fn coset_measures() -> Check {
    for pv in [2u64, 3, 5] {
        let p = prime(pv);
        for n in 1..=4u32 {
            let eps = level_set_measure(&Coset::new(int(1), n), p)
                .map_err(|e| e.to_string())?
                .epsilon;
            let d = hensel_depth(p, n);
            for e in [d + 1, d + 2] {
                let counted = rat(count_unit_powers(pv, n, e) as i64, pv.pow(e) as i64);
                ensure(counted == eps, || format!("p={pv} n={n} mod p^{e}: {counted} vs ε={eps}"))?;
            }
        }
    }
    Ok("12 (p, n) pairs at two moduli".into())
}

struct SimpleCase {
    f: SimpleFunctionExpr,
    p: u64,
    x: Vec<Rational>,
    fixed: Vec<i64>,
    /// Per-step decay of the terms along the summation direction.
    rho: Rational,
    l: u32,
}

fn single(coeff: Rational, z: Vec<u32>, q: Vec<i64>, x: &str) -> SimpleTerm {
    SimpleTerm {
        coeff,
        z_powers: z,
        q_exponents: q,
        q_const: 0,
        x_part: expr(x),
    }
}

/// 8. Summation over one integer variable via the λ-integral.
fn simple_sums() -> Check {
    let cases = [
        SimpleCase {
            f: SimpleFunctionExpr {
                terms: vec![single(int(1), vec![1], vec![-1], "1")],
                ranges: vec![ZRange { lo: Some(0), hi: None }],
            },
            p: 3,
            x: vec![],
            fixed: vec![],
            rho: rat(1, 3),
            l: 1,
        },
        SimpleCase {
            f: SimpleFunctionExpr {
                terms: vec![single(rat(2, 7), vec![2], vec![-2], "1")],
                ranges: vec![ZRange { lo: Some(2), hi: None }],
            },
            p: 5,
            x: vec![],
            fixed: vec![],
            rho: rat(1, 25),
            l: 2,
        },
        SimpleCase {
            f: SimpleFunctionExpr {
                terms: vec![single(int(1), vec![0], vec![1], "1")],
                ranges: vec![ZRange { lo: None, hi: Some(-1) }],
            },
            p: 3,
            x: vec![],
            fixed: vec![],
            rho: rat(1, 3),
            l: 0,
        },
        SimpleCase {
            f: SimpleFunctionExpr {
                terms: vec![single(int(1), vec![1], vec![1], "1")],
                ranges: vec![ZRange { lo: None, hi: Some(3) }],
            },
            p: 2,
            x: vec![],
            fixed: vec![],
            rho: rat(1, 2),
            l: 1,
        },
        SimpleCase {
            f: SimpleFunctionExpr {
                terms: vec![
                    single(int(1), vec![1, 2], vec![0, -1], "abs(x0)"),
                    single(rat(1, 2), vec![0, 0], vec![1, -2], "v(x0) + 1"),
                ],
                ranges: vec![ZRange { lo: Some(0), hi: Some(3) }, ZRange { lo: Some(1), hi: None }],
            },
            p: 3,
            x: vec![int(9)],
            fixed: vec![2],
            rho: rat(1, 3),
            l: 2,
        },
    ];
    for (i, c) in cases.iter().enumerate() {
        let p = prime(c.p);
        let reduced = sum_eliminate_simple(&c.f, p).map_err(|e| format!("case {i}: {e}"))?;
        let closed = reduced.eval(&c.x, &c.fixed, p).map_err(|e| e.to_string())?;
        let range = *c.f.ranges.last().unwrap();
        let (start, dir) = match (range.lo, range.hi) {
            (Some(lo), None) => (lo, 1i64),
            (None, Some(hi)) => (hi, -1),
            _ => return Err(format!("case {i} is not half-bounded")),
        };
        let value_at = |z: i64| {
            let mut args = c.fixed.clone();
            args.push(z);
            c.f.eval(&c.x, &args, p).unwrap()
        };
        let partial: Rational = (0..60).map(|k| value_at(start + dir * k)).sum();
        let first_out = start + dir * 60;
        // terms are nonnegative here and decay at most like |z|^l ρ^|z|
        let k = first_out.abs().max(1);
        let scale = value_at(first_out).abs() / (num_traits::pow(int(k), c.l as usize) * pow_signed(&c.rho, k));
        let bound = tail_bound(k, c.l, &c.rho) * scale.max(Rational::one());
        let gap = (&closed - &partial).abs();
        ensure(gap <= bound, || format!("case {i}: gap {gap} > bound {bound}"))?;
    }
    Ok("5 half-bounded functions within tail bound".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("exact integral values", exact_values),
        ("Igusa zeta functions", zeta_functions),
        ("decomposition soundness", decomposition_soundness),
        ("Fubini property", fubini),
        ("zero convention", zero_convention),
        ("sum closed forms", sum_closed_forms),
        ("coset measures", coset_measures),
        ("summation over Z", simple_sums),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
