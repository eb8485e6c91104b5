use num_traits::{One, Signed, Zero};
use padic_cells::cells::Cell;
use padic_cells::decompose::decompose_univariate;
use padic_cells::expr::{
    eval_dterm_exact, parse_constructible, parse_dterm, CTerm, ConstructibleExpr, DTerm,
};
use padic_cells::integrate::{eliminate_auto, eliminate_last_variable, igusa_zeta, CellIntegrand};
use padic_cells::oracle::{Oracle, OracleDomain};
use padic_cells::padic::{norm, rat, valuation, ExtendedInt, Prime, Rational};
use padic_cells::poly::UniPoly;
use padic_cells::sums::{sum_progression, ProgressionSum};
use proptest::prelude::*;

fn prime() -> impl Strategy<Value = Prime> {
    prop::sample::select(vec![2u64, 3, 5, 7]).prop_map(|p| Prime::new(p).unwrap())
}

fn small_prime() -> impl Strategy<Value = Prime> {
    prop::sample::select(vec![2u64, 3, 5]).prop_map(|p| Prime::new(p).unwrap())
}

fn rational() -> impl Strategy<Value = Rational> {
    (-60i64..=60, 1i64..=40).prop_map(|(n, d)| rat(n, d))
}

fn nonzero_rational() -> impl Strategy<Value = Rational> {
    rational().prop_filter("nonzero", |x| !x.is_zero())
}

fn dterm() -> impl Strategy<Value = DTerm> {
    let leaf = prop_oneof![
        (0usize..3).prop_map(DTerm::var),
        rational().prop_map(DTerm::constant),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| DTerm::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| DTerm::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| DTerm::mul(a, b)),
            inner.clone().prop_map(DTerm::neg),
            inner.clone().prop_map(DTerm::inv),
            (prop::collection::vec(rational(), 1..4), inner).prop_map(|(c, a)| DTerm::poly(c, a)),
        ]
    })
}

fn constructible() -> impl Strategy<Value = ConstructibleExpr> {
    let term = (
        nonzero_rational(),
        prop::collection::vec((dterm(), 1u32..3), 0..2),
        prop::collection::vec((dterm(), 1u32..3), 0..2),
    )
        .prop_map(|(c, vals, norms)| {
            let mut t = CTerm::constant(c);
            for (h, e) in vals {
                t = t.with_val(h, e);
            }
            for (h, e) in norms {
                t = t.with_norm(h, e);
            }
            t
        });
    prop::collection::vec(term, 0..3).prop_map(ConstructibleExpr::from_terms)
}

fn univariate_poly() -> impl Strategy<Value = UniPoly> {
    prop::collection::vec(-9i64..=9, 1..5)
        .prop_map(|c| UniPoly::from_ints(&c))
        .prop_filter("nonzero", |f| !f.is_zero())
}

/// Points with distinct small coordinates, exercising inv at zero too.
fn point() -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec(rational(), 3)
}

fn direct_power_integral(f: &UniPoly, p: Prime, s: u32) -> Rational {
    let dec = decompose_univariate(f, p, &Cell::unit_ball(p), 8).unwrap();
    let cis: Vec<CellIntegrand> = dec
        .terms(0, p)
        .into_iter()
        .map(|t| CellIntegrand::new(t.cell.clone(), vec![t.power(s)]).unwrap())
        .collect();
    eliminate_last_variable(&cis, &[], p).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_terms_parse_back_to_the_same_function(t in dterm(), x in point(), p in prime()) {
        let printed = t.to_string();
        let back = parse_dterm(&printed).unwrap();
        // parsing collapses polynomial subterms; from there printing is stable
        prop_assert_eq!(parse_dterm(&back.to_string()).unwrap(), back.clone());
        let a = eval_dterm_exact(&t, &x, p).map(|v| v.value).ok();
        let b = eval_dterm_exact(&back, &x, p).map(|v| v.value).ok();
        prop_assert_eq!(a, b, "{} changed meaning", printed);
    }

    #[test]
    fn printed_constructibles_parse_back(c in constructible(), x in point(), p in prime()) {
        let printed = c.to_string();
        let back = parse_constructible(&printed).unwrap();
        prop_assert_eq!(parse_constructible(&back.to_string()).unwrap(), back.clone());
        // v(0) is undefined, so both sides may fail; they must fail together
        match (c.eval(&x, p), back.eval(&x, p)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{printed}: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn valuation_is_additive_and_ultrametric(x in rational(), y in rational(), p in prime()) {
        let vx = valuation(&x, p);
        let vy = valuation(&y, p);
        let vxy = valuation(&(&x * &y), p);
        match (vx, vy) {
            (ExtendedInt::Finite(a), ExtendedInt::Finite(b)) => {
                prop_assert_eq!(vxy, ExtendedInt::Finite(a + b));
            }
            _ => prop_assert_eq!(vxy, ExtendedInt::Infinity),
        }
        prop_assert!(valuation(&(&x + &y), p) >= vx.min(vy));
        prop_assert_eq!(norm(&(&x * &y), p), norm(&x, p) * norm(&y, p));
        if vx != vy {
            prop_assert_eq!(valuation(&(&x + &y), p), vx.min(vy));
        }
    }

    #[test]
    fn progression_sums_split_at_any_index(
        l in 0u32..4,
        num in 1i64..=4,
        extra in 1i64..=12,
        negative in any::<bool>(),
        modulus in 1i64..=4,
        residue in 0i64..4,
        k_min in -6i64..=6,
        cut in 0i64..=10,
    ) {
        let ratio = rat(if negative { -num } else { num }, 2 * num + extra);
        let whole = ProgressionSum { l, ratio: ratio.clone(), residue, modulus, k_min, k_max: None };
        let head = ProgressionSum { k_max: Some(k_min + cut), ..whole.clone() };
        let tail = ProgressionSum { k_min: k_min + cut + 1, ..whole.clone() };
        let total = sum_progression(&whole).unwrap();
        let parts = sum_progression(&head).unwrap() + sum_progression(&tail).unwrap();
        prop_assert_eq!(total, parts);
    }

    #[test]
    fn closed_finite_sums_match_direct_summation(
        l in 0u32..5,
        ratio in rational(),
        modulus in 1i64..=3,
        residue in 0i64..3,
        k_min in -8i64..=8,
        len in 0i64..=15,
    ) {
        let s = ProgressionSum { l, ratio: ratio.clone(), residue, modulus, k_min, k_max: Some(k_min + len) };
        prop_assume!(!ratio.is_zero() || k_min >= 0);
        let direct: Rational = (k_min..=k_min + len)
            .filter(|k| (k - residue).rem_euclid(modulus) == 0)
            .map(|k| {
                let r = if k >= 0 {
                    num_traits::pow(ratio.clone(), k as usize)
                } else {
                    num_traits::pow(ratio.recip(), (-k) as usize)
                };
                num_traits::pow(Rational::from_integer(k.into()), l as usize) * r
            })
            .sum();
        prop_assert_eq!(sum_progression(&s).unwrap(), direct);
    }

    #[test]
    fn symbolic_and_concrete_elimination_agree(f in univariate_poly(), p in small_prime(), s in 1u32..3) {
        let target = format!("abs({})^{s}", f.to_dterm(0));
        let symbolic = eliminate_auto(&parse_constructible(&target).unwrap(), 1, p, 8).unwrap();
        prop_assert!(!symbolic.nonintegrable);
        let value = symbolic.eval(&[], p).unwrap();
        prop_assert_eq!(value, direct_power_integral(&f, p, s));
    }

    #[test]
    fn zeta_matches_direct_integration(f in univariate_poly(), p in small_prime(), s in 1u32..4) {
        let z = igusa_zeta(&f, p, 8).unwrap();
        let at = z.eval(&p.power(-(s as i64))).unwrap();
        prop_assert_eq!(at, direct_power_integral(&f, p, s));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn oracle_boundary_mass_shrinks_with_digits(f in univariate_poly(), p in small_prime()) {
        let oracle = Oracle::with_budget(p, 1 << 20);
        let g = parse_constructible(&format!("abs({})", f.to_dterm(0))).unwrap();
        let domain = OracleDomain::Box { vars: 1 };
        let mut last: Option<Rational> = None;
        for digits in 1..=4 {
            let est = oracle.integrate(&g, &domain, &[], digits).unwrap();
            prop_assert!(!est.sampled);
            prop_assert!(!est.boundary_mass.is_negative());
            if let Some(prev) = &last {
                prop_assert!(&est.boundary_mass <= prev, "{} > {}", est.boundary_mass, prev);
            }
            last = Some(est.boundary_mass);
        }
        prop_assert!(last.unwrap() <= Rational::one());
    }
}
