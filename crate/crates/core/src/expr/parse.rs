//! Recursive-descent parser for the expression language.
//!
//! ```text
//! dterm  := sum
//! sum    := prod (('+' | '-') prod)*
//! prod   := unary ('*' unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' nat)?
//! atom   := rational | 'x'nat | 'inv(' dterm ')' | '(' dterm ')'
//!         | 'series(' '[' rationals (';' 'tail' int)? ']' (',' dterm)* ')'
//!
//! constructible := cterm (('+' | '-') cterm)*
//! cterm         := '-'? cfactor ('*' cfactor)*
//! cfactor       := rational | 'v(' dterm ')' ('^' nat)? | 'abs(' dterm ')' ('^' nat)?
//! ```
//!
//! Whitespace is insignificant and `#` starts a comment running to the end
//! of the line.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::{CTerm, ConstructibleExpr, DTerm};
use crate::error::{Error, Result, SourceSpan};
use crate::padic::Rational;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Sym(char),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n: BigInt = src[start..i].parse().expect("digits");
            out.push(Token {
                tok: Tok::Num(n),
                span: SourceSpan::new(start, i),
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                span: SourceSpan::new(start, i),
            });
        } else if "+-*^()[],;/".contains(c) {
            out.push(Token {
                tok: Tok::Sym(c),
                span: SourceSpan::new(i, i + 1),
            });
            i += 1;
        } else {
            let width = src[i..].chars().next().map_or(1, char::len_utf8);
            return Err(Error::Syntax {
                message: format!("unexpected character {:?}", &src[i..i + width]),
                span: SourceSpan::new(i, i + width),
            });
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: SourceSpan::point(src.len()),
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            message: message.into(),
            span: self.span(),
        })
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.error(format!("expected '{c}'"))
        }
    }

    fn expect_end(&self) -> Result<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            _ => self.error("unexpected trailing input"),
        }
    }

    fn nat(&mut self) -> Result<u32> {
        match self.peek().clone() {
            Tok::Num(n) => {
                let span = self.span();
                self.bump();
                u32::try_from(n).map_err(|_| Error::Syntax {
                    message: "exponent too large".into(),
                    span,
                })
            }
            _ => self.error("expected a natural number"),
        }
    }

    fn int(&mut self) -> Result<i64> {
        let neg = self.eat('-');
        match self.peek().clone() {
            Tok::Num(n) => {
                let span = self.span();
                self.bump();
                let v = i64::try_from(n).map_err(|_| Error::Syntax {
                    message: "integer too large".into(),
                    span,
                })?;
                Ok(if neg { -v } else { v })
            }
            _ => self.error("expected an integer"),
        }
    }

    /// `num` or `num/den`, unsigned.
    fn rational_literal(&mut self) -> Result<Rational> {
        let Tok::Num(n) = self.peek().clone() else {
            return self.error("expected a number");
        };
        self.bump();
        if self.eat('/') {
            let span = self.span();
            let Tok::Num(d) = self.peek().clone() else {
                return self.error("expected a denominator");
            };
            self.bump();
            if d.is_zero() {
                return Err(Error::Syntax {
                    message: "zero denominator".into(),
                    span,
                });
            }
            return Ok(Rational::new(n, d));
        }
        Ok(Rational::from_integer(n))
    }

    fn signed_rational(&mut self) -> Result<Rational> {
        let neg = self.eat('-');
        let r = self.rational_literal()?;
        Ok(if neg { -r } else { r })
    }

    fn dterm(&mut self) -> Result<DTerm> {
        let mut lhs = self.prod()?;
        loop {
            if self.eat('+') {
                lhs = DTerm::add(lhs, self.prod()?);
            } else if self.eat('-') {
                lhs = DTerm::sub(lhs, self.prod()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn prod(&mut self) -> Result<DTerm> {
        let mut lhs = self.unary()?;
        while self.eat('*') {
            lhs = DTerm::mul(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<DTerm> {
        if self.eat('-') {
            return Ok(DTerm::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<DTerm> {
        let base = self.atom()?;
        if self.eat('^') {
            let e = self.nat()?;
            return Ok(power_of(base, e));
        }
        Ok(base)
    }

    fn call_open(&mut self, name: &str) -> Result<()> {
        if self.eat('(') {
            Ok(())
        } else {
            self.error(format!("expected '(' after {name}"))
        }
    }

    fn atom(&mut self) -> Result<DTerm> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Num(_) => Ok(DTerm::Const(self.rational_literal()?)),
            Tok::Sym('(') => {
                self.bump();
                let inner = self.dterm()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "inv" => {
                        self.call_open("inv")?;
                        let inner = self.dterm()?;
                        self.expect(')')?;
                        Ok(DTerm::inv(inner))
                    }
                    "series" => self.series(),
                    "v" | "abs" => Err(Error::Syntax {
                        message: format!("{name}(…) is a constructible factor, not a D-function"),
                        span,
                    }),
                    _ => match name.strip_prefix('x').map(str::parse::<usize>) {
                        Some(Ok(i)) => Ok(DTerm::Var(i)),
                        _ => Err(Error::Syntax {
                            message: format!("unknown identifier {name:?}"),
                            span,
                        }),
                    },
                }
            }
            Tok::Eof => self.error("unexpected end of input"),
            Tok::Sym(c) => self.error(format!("unexpected '{c}'")),
        }
    }

    fn series(&mut self) -> Result<DTerm> {
        self.call_open("series")?;
        self.expect('[')?;
        let mut coeffs = Vec::new();
        let mut tail = None;
        if *self.peek() != Tok::Sym(']') && *self.peek() != Tok::Sym(';') {
            coeffs.push(self.signed_rational()?);
            while self.eat(',') {
                coeffs.push(self.signed_rational()?);
            }
        }
        if self.eat(';') {
            match self.peek().clone() {
                Tok::Ident(kw) if kw == "tail" => {
                    self.bump();
                }
                _ => return self.error("expected 'tail'"),
            }
            tail = Some(self.int()?);
        }
        self.expect(']')?;
        let mut args = Vec::new();
        while self.eat(',') {
            args.push(self.dterm()?);
        }
        let close = self.span();
        self.expect(')')?;
        if args.is_empty() {
            return Err(Error::Arity(format!(
                "series at {close} needs at least one argument"
            )));
        }
        let tail_valuation = tail.unwrap_or(coeffs.len() as i64);
        Ok(DTerm::Series {
            coeffs,
            tail_valuation,
            args,
        })
    }

    fn constructible(&mut self) -> Result<ConstructibleExpr> {
        let mut terms = vec![self.cterm(false)?];
        loop {
            if self.eat('+') {
                terms.push(self.cterm(false)?);
            } else if self.eat('-') {
                terms.push(self.cterm(true)?);
            } else {
                return Ok(ConstructibleExpr::from_terms(terms));
            }
        }
    }

    fn cterm(&mut self, negated: bool) -> Result<CTerm> {
        let mut term = CTerm::constant(Rational::one());
        if negated ^ self.eat('-') {
            term.coeff = -term.coeff;
        }
        self.cfactor(&mut term)?;
        while self.eat('*') {
            self.cfactor(&mut term)?;
        }
        Ok(term)
    }

    fn cfactor(&mut self, term: &mut CTerm) -> Result<()> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Num(_) => {
                let c = self.rational_literal()?;
                term.coeff *= c;
                Ok(())
            }
            Tok::Ident(name) if name == "v" || name == "abs" => {
                self.bump();
                self.call_open(&name)?;
                let h = self.dterm()?.normalize();
                self.expect(')')?;
                let e = if self.eat('^') { self.nat()? } else { 1 };
                if e == 0 {
                    return Ok(());
                }
                if name == "v" {
                    term.val_factors.push((h, e));
                } else {
                    term.norm_factors.push((h, e));
                }
                Ok(())
            }
            _ => Err(Error::Syntax {
                message: "expected a rational, v(…) or abs(…)".into(),
                span,
            }),
        }
    }
}

fn power_of(base: DTerm, e: u32) -> DTerm {
    if e == 0 {
        return DTerm::Const(Rational::one());
    }
    let mut acc = base.clone();
    for _ in 1..e {
        acc = DTerm::mul(acc, base.clone());
    }
    acc
}

/// Parses a D-function term and returns its normal form.
pub fn parse_dterm(text: &str) -> Result<DTerm> {
    let mut p = Parser::new(text)?;
    let t = p.dterm()?;
    p.expect_end()?;
    Ok(t.normalize())
}

/// Parses a constructible function: a sum of `rational * v(h)^e * abs(h)^e`
/// products.
pub fn parse_constructible(text: &str) -> Result<ConstructibleExpr> {
    let mut p = Parser::new(text)?;
    let c = p.constructible()?;
    p.expect_end()?;
    Ok(c)
}
