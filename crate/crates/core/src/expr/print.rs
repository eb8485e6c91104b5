use std::fmt::{self, Write};

use num_traits::{One, Signed, Zero};

use super::{CTerm, ConstructibleExpr, DTerm};
use crate::padic::{format_rational, Rational};

const PREC_TOP: u8 = 0;
const PREC_SUM: u8 = 1;
const PREC_PROD: u8 = 2;
const PREC_UNARY: u8 = 3;

fn precedence(t: &DTerm) -> u8 {
    match t {
        DTerm::Add(..) => PREC_SUM,
        DTerm::Mul(..) => PREC_PROD,
        DTerm::Neg(_) => PREC_UNARY,
        // polynomials are parenthesized anywhere below the top level
        DTerm::Poly { .. } => PREC_SUM,
        DTerm::Const(c) if c.is_negative() => PREC_UNARY,
        DTerm::Const(c) if !c.is_integer() => PREC_PROD,
        _ => 4,
    }
}

fn write_term(out: &mut String, t: &DTerm, min_prec: u8) {
    let needs_parens = match t {
        DTerm::Poly { .. } => min_prec > PREC_TOP,
        _ => precedence(t) < min_prec,
    };
    if needs_parens {
        out.push('(');
    }
    match t {
        DTerm::Var(i) => {
            let _ = write!(out, "x{i}");
        }
        DTerm::Const(c) => out.push_str(&format_rational(c)),
        DTerm::Add(a, b) => {
            write_term(out, a, PREC_SUM);
            match b.as_ref() {
                DTerm::Neg(inner) => {
                    out.push_str(" - ");
                    write_term(out, inner, PREC_PROD);
                }
                _ => {
                    out.push_str(" + ");
                    write_term(out, b, PREC_PROD);
                }
            }
        }
        DTerm::Mul(a, b) => {
            write_term(out, a, PREC_PROD);
            out.push_str(" * ");
            write_term(out, b, PREC_UNARY);
        }
        DTerm::Neg(a) => {
            out.push('-');
            write_term(out, a, PREC_UNARY);
        }
        DTerm::Inv(a) => {
            out.push_str("inv(");
            write_term(out, a, PREC_TOP);
            out.push(')');
        }
        DTerm::Poly { coeffs, arg } => write_poly(out, coeffs, arg),
        DTerm::Series {
            coeffs,
            tail_valuation,
            args,
        } => {
            out.push_str("series([");
            for (i, c) in coeffs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format_rational(c));
            }
            let _ = write!(out, "; tail {tail_valuation}]");
            for a in args {
                out.push_str(", ");
                write_term(out, a, PREC_TOP);
            }
            out.push(')');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

fn write_poly(out: &mut String, coeffs: &[Rational], arg: &DTerm) {
    let mut arg_text = String::new();
    write_term(&mut arg_text, arg, 4);
    let mut first = true;
    for (deg, c) in coeffs.iter().enumerate().rev() {
        if c.is_zero() {
            continue;
        }
        let magnitude = c.abs();
        if first {
            if c.is_negative() {
                out.push('-');
            }
        } else {
            out.push_str(if c.is_negative() { " - " } else { " + " });
        }
        first = false;
        match deg {
            0 => out.push_str(&format_rational(&magnitude)),
            _ => {
                if !magnitude.is_one() {
                    out.push_str(&format_rational(&magnitude));
                    out.push('*');
                }
                out.push_str(&arg_text);
                if deg > 1 {
                    let _ = write!(out, "^{deg}");
                }
            }
        }
    }
    if first {
        out.push('0');
    }
}

impl fmt::Display for DTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_term(&mut s, self, PREC_TOP);
        f.write_str(&s)
    }
}

fn write_cterm(out: &mut String, term: &CTerm, leading: bool) {
    let magnitude = term.coeff.abs();
    if term.coeff.is_negative() {
        out.push_str(if leading { "-" } else { " - " });
    } else if !leading {
        out.push_str(" + ");
    }
    let mut parts: Vec<String> = Vec::new();
    let bare = term.val_factors.is_empty() && term.norm_factors.is_empty();
    if bare || !magnitude.is_one() {
        parts.push(format_rational(&magnitude));
    }
    for (h, e) in &term.val_factors {
        parts.push(if *e == 1 { format!("v({h})") } else { format!("v({h})^{e}") });
    }
    for (h, e) in &term.norm_factors {
        parts.push(if *e == 1 {
            format!("abs({h})")
        } else {
            format!("abs({h})^{e}")
        });
    }
    out.push_str(&parts.join(" * "));
}

impl fmt::Display for ConstructibleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut s = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            write_cterm(&mut s, t, i == 0);
        }
        f.write_str(&s)
    }
}
