//! Problem files and the batch commands behind the `padic-cells` binary.
//!
//! Exit codes: 0 success, 1 input, schema or unsupported problem, 2
//! precision exhausted, 3 a verification failed.

use num_traits::{Signed, Zero};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::cells::Cell;
use crate::decompose::{decompose_univariate, verify_prepared};
use crate::error::{Error, Result};
use crate::expr::{parse_constructible, parse_dterm, CTerm, ConstructibleExpr, DTerm};
use crate::integrate::{
    eliminate_auto, eliminate_last_variable, eliminate_symbolic, igusa_zeta, poincare_check,
    prepare_on_cell, CellIntegrand, Guard, Piece, PiecewiseExpr,
};
use crate::oracle::{Oracle, OracleDomain};
use crate::padic::{format_rational, norm, parse_rational, Prime, Rational};
use crate::poly::UniPoly;

pub const PROBLEM_VERSION: u32 = 1;

/// Options shared by every command.
#[derive(Clone, Debug)]
pub struct Settings {
    pub p: Option<u64>,
    pub precision: u32,
    pub budget: Option<u64>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            p: None,
            precision: 8,
            budget: None,
        }
    }
}

impl Settings {
    fn oracle(&self, p: Prime) -> Oracle {
        match self.budget {
            Some(b) => Oracle::with_budget(p, b),
            None => Oracle::new(p),
        }
    }
}

/// A command's JSON report and whether its checks passed.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub pass: bool,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome { report, pass: true }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::PrecisionExhausted(_) => 2,
        _ => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Concrete,
    Symbolic,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "concrete" => Ok(Mode::Concrete),
            "symbolic" => Ok(Mode::Symbolic),
            other => Err(Error::Schema(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum CellsSpec {
    Auto,
    List(Vec<Cell>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VariablesJson {
    #[serde(default)]
    params: usize,
    #[serde(default = "one")]
    integrate: usize,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemJson {
    version: Option<u32>,
    p: Option<u64>,
    variables: Option<VariablesJson>,
    integrand: Option<String>,
    polynomial: Option<String>,
    cells: Option<Value>,
    mode: Option<String>,
    base_points: Option<Vec<Vec<Value>>>,
}

/// A validated problem file.
#[derive(Clone, Debug)]
pub struct Problem {
    pub p: Prime,
    pub params: usize,
    pub integrate: usize,
    pub integrand: Option<ConstructibleExpr>,
    pub polynomial: Option<DTerm>,
    pub cells: CellsSpec,
    pub mode: Mode,
    pub base_points: Vec<Vec<Rational>>,
}

pub fn parse_rational_value(v: &Value) -> Result<Rational> {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_i64() || n.is_u64() => n.to_string(),
        other => return Err(Error::Schema(format!("expected a rational, got {other}"))),
    };
    parse_rational(&text).ok_or_else(|| Error::Schema(format!("bad rational {text:?}")))
}

/// Comma-separated rationals, as given to `--point`.
pub fn parse_point(text: &str) -> Result<Vec<Rational>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| parse_rational(s).ok_or_else(|| Error::Schema(format!("bad rational {s:?}"))))
        .collect()
}

impl Problem {
    pub fn from_json(text: &str, p_override: Option<u64>) -> Result<Problem> {
        let raw: ProblemJson = serde_json::from_str(text)?;
        match raw.version {
            Some(PROBLEM_VERSION) => {}
            Some(v) => return Err(Error::Schema(format!("unsupported version {v}"))),
            None => return Err(Error::Schema("missing \"version\"".into())),
        }
        let p = p_override
            .or(raw.p)
            .ok_or_else(|| Error::Schema("no prime: give \"p\" or --p".into()))?;
        let p = Prime::new(p)?;
        let (params, integrate) = raw
            .variables
            .map_or((0, 1), |v| (v.params, v.integrate));
        if integrate == 0 {
            return Err(Error::Schema("nothing to integrate".into()));
        }
        let arity = params + integrate;
        let integrand = raw.integrand.as_deref().map(parse_constructible).transpose()?;
        if let Some(f) = &integrand {
            if f.arity() > arity {
                return Err(Error::Arity(format!(
                    "integrand uses x{} but the problem has {arity} variables",
                    f.arity() - 1
                )));
            }
        }
        let polynomial = raw.polynomial.as_deref().map(parse_dterm).transpose()?;
        let cells = match raw.cells {
            None => CellsSpec::Auto,
            Some(Value::String(s)) if s == "auto" => CellsSpec::Auto,
            Some(Value::Array(items)) => {
                let mut cells = Vec::with_capacity(items.len());
                for item in items {
                    let cell: Cell = serde_json::from_value(item)?;
                    let cell = Cell::new(cell.conditions)?;
                    if cell.arity() != params + 1 && cell.arity() != arity {
                        return Err(Error::Arity(format!(
                            "cell of arity {} in a problem with {arity} variables",
                            cell.arity()
                        )));
                    }
                    cells.push(cell);
                }
                CellsSpec::List(cells)
            }
            Some(other) => return Err(Error::Schema(format!("\"cells\" must be a list or \"auto\", got {other}"))),
        };
        let mode = raw.mode.as_deref().unwrap_or("concrete").parse()?;
        let base_points = match raw.base_points {
            Some(points) => points
                .iter()
                .map(|pt| pt.iter().map(parse_rational_value).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?,
            None if params == 0 => vec![Vec::new()],
            None => Vec::new(),
        };
        if let Some(bad) = base_points.iter().find(|pt| pt.len() != params) {
            return Err(Error::Arity(format!(
                "base point of length {} for {params} parameters",
                bad.len()
            )));
        }
        Ok(Problem {
            p,
            params,
            integrate,
            integrand,
            polynomial,
            cells,
            mode,
            base_points,
        })
    }

    fn integrand(&self) -> Result<&ConstructibleExpr> {
        self.integrand
            .as_ref()
            .ok_or_else(|| Error::Schema("missing \"integrand\"".into()))
    }

    /// The polynomial to decompose: `polynomial`, or `h` when the integrand
    /// is exactly `abs(h)`.
    fn decomposition_target(&self) -> Result<UniPoly> {
        let term = match (&self.polynomial, &self.integrand) {
            (Some(f), _) => f.clone(),
            (None, Some(g)) => match g.terms.as_slice() {
                [CTerm {
                    coeff,
                    val_factors,
                    norm_factors,
                }] if coeff == &Rational::from_integer(1.into())
                    && val_factors.is_empty()
                    && norm_factors.len() == 1
                    && norm_factors[0].1 == 1 =>
                {
                    norm_factors[0].0.clone()
                }
                _ => {
                    return Err(Error::Schema(
                        "decompose needs \"polynomial\" or an integrand abs(f)".into(),
                    ))
                }
            },
            (None, None) => return Err(Error::Schema("missing \"polynomial\"".into())),
        };
        UniPoly::from_dterm(&term, 0)
            .ok_or_else(|| Error::Schema(format!("{term} is not a polynomial in x0")))
    }
}

fn rationals(xs: &[Rational]) -> Value {
    Value::Array(xs.iter().map(|x| Value::String(format_rational(x))).collect())
}

/// `decompose`: the cells and prepared terms of `|f|`, optionally checked
/// against every residue class mod `p^precision`.
pub fn cmd_decompose(text: &str, settings: &Settings, verify: bool) -> Result<Outcome> {
    let problem = Problem::from_json(text, settings.p)?;
    let p = problem.p;
    let f = problem.decomposition_target()?;
    if f.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let domain = match &problem.cells {
        CellsSpec::Auto => Cell::unit_ball(p),
        CellsSpec::List(cells) if cells.len() == 1 && cells[0].arity() == 1 => cells[0].clone(),
        CellsSpec::List(_) => {
            return Err(Error::Schema("decompose takes a single one-variable domain cell".into()))
        }
    };
    let dec = decompose_univariate(&f, p, &domain, settings.precision)?;
    let terms = dec.terms(0, p);
    let cells: Vec<Value> = dec
        .pieces
        .iter()
        .map(|pc| serde_json::to_value(&pc.cell))
        .collect::<std::result::Result<_, _>>()?;
    let term_json: Vec<Value> = terms
        .iter()
        .map(|t| {
            let cond = t.condition();
            let raw = t.raw_delta.clone().unwrap_or_else(Rational::zero);
            let mut v = json!({
                "delta": format_rational(&raw),
                "abs_delta": format_rational(&t.delta.as_constant().unwrap_or_else(|| norm(&raw, p))),
                "a": t.a,
                "l": t.l,
                "gamma": cond.center.to_string(),
                "mu": format_rational(&cond.coset.mu),
                "n": cond.coset.n,
            });
            if let Some(floor) = t.deferred_floor {
                v["deferred_floor"] = json!(floor);
            }
            v
        })
        .collect();
    let mut report = json!({
        "cells": cells,
        "terms": term_json,
        "roots": serde_json::to_value(&dec.roots)?,
    });
    let mut pass = true;
    if verify {
        let r = verify_prepared(&terms, &f, p, settings.precision, &domain)?;
        pass = r.pass;
        report["verify"] = serde_json::to_value(&r)?;
    }
    Ok(Outcome { report, pass })
}

fn whole(expr: ConstructibleExpr) -> PiecewiseExpr {
    PiecewiseExpr {
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
    }
}

/// All integration variables eliminated, the parameters left symbolic.
pub fn symbolic_integral(problem: &Problem, precision: u32) -> Result<PiecewiseExpr> {
    let p = problem.p;
    let integrand = problem.integrand()?.clone();
    match &problem.cells {
        CellsSpec::Auto => {
            let mut expr = integrand;
            let mut arity = problem.params + problem.integrate;
            for _ in 0..problem.integrate {
                let r = eliminate_auto(&expr, arity, p, precision)?;
                if r.nonintegrable {
                    return Ok(r);
                }
                expr = r.as_single().expect("auto results are unguarded");
                arity -= 1;
            }
            Ok(whole(expr).collapse())
        }
        CellsSpec::List(cells) => {
            let mut stage: Vec<(Cell, ConstructibleExpr)> =
                cells.iter().map(|c| (c.clone(), integrand.clone())).collect();
            for step in 0..problem.integrate {
                let mut pieces = Vec::new();
                for (cell, expr) in &stage {
                    if cell.arity() != problem.params + problem.integrate - step {
                        return Err(Error::Arity(format!(
                            "cell of arity {} at elimination step {step}",
                            cell.arity()
                        )));
                    }
                    let ci = prepare_on_cell(expr, cell, p)?;
                    let r = eliminate_symbolic(&[ci], p)?;
                    if r.nonintegrable {
                        return Ok(r);
                    }
                    pieces.extend(r.pieces);
                }
                if step + 1 == problem.integrate {
                    return Ok(PiecewiseExpr {
                        pieces,
                        nonintegrable: false,
                    }
                    .collapse());
                }
                if let Some(pc) = pieces.iter().find(|pc| !pc.guard.pins.is_empty()) {
                    return Err(Error::Unsupported(format!(
                        "inner result depends on residues of {}",
                        pc.guard.pins[0].bound
                    )));
                }
                stage = pieces.into_iter().map(|pc| (pc.guard.base, pc.expr)).collect();
            }
            unreachable!("integrate ≥ 1")
        }
    }
}

/// `I(f)` at one base point; the concrete route handles one integration
/// variable over given cells, everything else goes through the symbolic
/// result.
fn value_at(
    problem: &Problem,
    symbolic: &mut Option<PiecewiseExpr>,
    base: &[Rational],
    precision: u32,
) -> Result<(Rational, bool)> {
    if let (CellsSpec::List(cells), 1) = (&problem.cells, problem.integrate) {
        let integrand = problem.integrand()?;
        let cis = cells
            .iter()
            .map(|c| prepare_on_cell(integrand, c, problem.p))
            .collect::<Result<Vec<CellIntegrand>>>()?;
        let r = eliminate_last_variable(&cis, base, problem.p)?;
        return Ok((r.value, r.nonintegrable));
    }
    if symbolic.is_none() {
        *symbolic = Some(symbolic_integral(problem, precision)?);
    }
    let s = symbolic.as_ref().expect("just set");
    if s.nonintegrable {
        return Ok((Rational::zero(), true));
    }
    Ok((s.eval(base, problem.p)?, false))
}

fn oracle_domain(problem: &Problem) -> Result<OracleDomain> {
    match (&problem.cells, problem.integrate) {
        (CellsSpec::Auto, n) => Ok(OracleDomain::Box { vars: n }),
        (CellsSpec::List(cells), 1) => Ok(OracleDomain::Cells(cells.clone())),
        _ => Err(Error::Unsupported(
            "oracle over cells in several integration variables".into(),
        )),
    }
}

/// Options of the `integrate` command.
#[derive(Clone, Debug, Default)]
pub struct IntegrateOptions {
    pub mode: Option<Mode>,
    pub points: Option<Vec<Vec<Rational>>>,
    pub verify_digits: Option<u32>,
}

pub fn cmd_integrate(text: &str, settings: &Settings, opts: &IntegrateOptions) -> Result<Outcome> {
    let mut problem = Problem::from_json(text, settings.p)?;
    if let Some(points) = &opts.points {
        if let Some(bad) = points.iter().find(|pt| pt.len() != problem.params) {
            return Err(Error::Arity(format!(
                "--point of length {} for {} parameters",
                bad.len(),
                problem.params
            )));
        }
        problem.base_points = points.clone();
    }
    let mode = opts.mode.unwrap_or(problem.mode);
    let mut report = json!({ "mode": if mode == Mode::Symbolic { "symbolic" } else { "concrete" } });
    let mut symbolic = None;
    if mode == Mode::Symbolic {
        let s = symbolic_integral(&problem, settings.precision)?;
        report["expression"] = json!(if s.nonintegrable { "0".to_string() } else { s.to_string() });
        report["nonintegrable"] = json!(s.nonintegrable);
        symbolic = Some(s);
    }
    let mut pass = true;
    let mut results = Vec::new();
    for base in &problem.base_points {
        let (value, nonintegrable) = value_at(&problem, &mut symbolic, base, settings.precision)?;
        let mut entry = json!({
            "point": rationals(base),
            "value": format_rational(&value),
            "nonintegrable": nonintegrable,
        });
        if let (Some(digits), false) = (opts.verify_digits, nonintegrable) {
            let oracle = settings.oracle(problem.p);
            let r = oracle.verify(problem.integrand()?, &oracle_domain(&problem)?, base, digits, &value)?;
            pass &= r.pass;
            entry["verify"] = r.to_json();
        }
        results.push(entry);
    }
    if mode == Mode::Concrete || !results.is_empty() {
        report["results"] = Value::Array(results);
    }
    Ok(Outcome { report, pass })
}

/// `verify`: engine against oracle at every base point.
pub fn cmd_verify(text: &str, settings: &Settings, digits: u32) -> Result<Outcome> {
    let problem = Problem::from_json(text, settings.p)?;
    let domain = oracle_domain(&problem)?;
    let oracle = settings.oracle(problem.p);
    let mut symbolic = None;
    let mut reports = Vec::new();
    let mut pass = true;
    for base in &problem.base_points {
        let (value, nonintegrable) = value_at(&problem, &mut symbolic, base, settings.precision)?;
        if nonintegrable {
            reports.push(json!({"point": rationals(base), "nonintegrable": true, "pass": true}));
            continue;
        }
        let r = oracle.verify(problem.integrand()?, &domain, base, digits, &value)?;
        pass &= r.pass;
        let mut v = r.to_json();
        if problem.params > 0 {
            v["point"] = rationals(base);
        }
        reports.push(v);
    }
    let report = match <[Value; 1]>::try_from(reports) {
        Ok([single]) => single,
        Err(many) => Value::Array(many),
    };
    Ok(Outcome { report, pass })
}

/// `measure`: the measure of the union of the problem's cells above each
/// base point, optionally checked by the oracle.
pub fn cmd_measure(text: &str, settings: &Settings, verify_digits: Option<u32>) -> Result<Outcome> {
    let problem = Problem::from_json(text, settings.p)?;
    let CellsSpec::List(cells) = &problem.cells else {
        return Err(Error::Schema("measure needs a list of cells".into()));
    };
    if let Some(c) = cells.iter().find(|c| c.arity() != problem.params + 1) {
        return Err(Error::Arity(format!("measure over a cell of arity {}", c.arity())));
    }
    let p = problem.p;
    let mut pass = true;
    let mut results = Vec::new();
    for base in &problem.base_points {
        let unit = ConstructibleExpr::constant(Rational::from_integer(1.into()));
        let cis = cells
            .iter()
            .map(|c| prepare_on_cell(&unit, c, p))
            .collect::<Result<Vec<_>>>()?;
        let r = eliminate_last_variable(&cis, base, p)?;
        if r.nonintegrable {
            return Err(Error::InfiniteMeasure);
        }
        let mut entry = json!({"point": rationals(base), "measure": format_rational(&r.value)});
        if let Some(digits) = verify_digits {
            let est = settings.oracle(p).measure(cells, base, digits)?;
            let gap = (&r.value - &est.estimate).abs();
            let ok = gap <= est.boundary_mass;
            pass &= ok;
            entry["verify"] = json!({
                "symbolic": format_rational(&r.value),
                "oracle": format_rational(&est.estimate),
                "bound": format_rational(&est.boundary_mass),
                "pass": ok,
            });
        }
        results.push(entry);
    }
    Ok(Outcome {
        report: json!({ "results": results }),
        pass,
    })
}

/// `zeta`: Igusa's zeta function of a polynomial in `x0`, with the optional
/// Poincaré series comparison over `check` coefficients.
pub fn cmd_zeta(f: &str, settings: &Settings, check: Option<usize>) -> Result<Outcome> {
    let p = Prime::new(
        settings
            .p
            .ok_or_else(|| Error::Schema("zeta needs --p".into()))?,
    )?;
    let term = parse_dterm(f)?;
    let poly = UniPoly::from_dterm(&term, 0)
        .ok_or_else(|| Error::Schema(format!("{term} is not a polynomial in x0")))?;
    if poly.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let zeta = igusa_zeta(&poly, p, settings.precision)?;
    let mut report = zeta.to_json();
    report["display"] = json!(zeta.to_string());
    let mut pass = true;
    if let Some(count) = check {
        let r = poincare_check(&poly, p, &zeta, count)?;
        pass = r.pass;
        report["poincare"] = json!({
            "predicted": rationals(&r.predicted),
            "counted": rationals(&r.counted),
            "pass": r.pass,
        });
    }
    Ok(Outcome { report, pass })
}

/// `parse`: syntax check of a constructible expression.
pub fn cmd_parse(text: &str) -> Result<Outcome> {
    let expr = parse_constructible(text)?;
    Ok(Outcome::ok(json!({
        "ok": true,
        "arity": expr.arity(),
        "expression": expr.to_string(),
    })))
}

/// A syntax error rendered with a caret under the offending span.
pub fn render_error(e: &Error, source: Option<&str>) -> String {
    match (e, source) {
        (Error::Syntax { message, span }, Some(src)) => {
            let width = (span.end.saturating_sub(span.start)).max(1);
            format!(
                "error: {message}\n  {src}\n  {}{}",
                " ".repeat(src[..span.start.min(src.len())].chars().count()),
                "^".repeat(width)
            )
        }
        _ => format!("error: {e}"),
    }
}
