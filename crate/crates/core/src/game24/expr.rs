use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rational::{ArithmeticError, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    fn precedence(self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    pub fn apply(self, l: Rational, r: Rational) -> Result<Rational, ArithmeticError> {
        match self {
            Op::Add => l.checked_add(r),
            Op::Sub => l.checked_sub(r),
            Op::Mul => l.checked_mul(r),
            Op::Div => l.checked_div(r),
        }
    }
}

/// Binary arithmetic expression over integer literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(u64),
    Bin { op: Op, left: Box<Expr>, right: Box<Expr> },
}

impl Expr {
    pub fn bin(op: Op, left: Expr, right: Expr) -> Self {
        Expr::Bin { op, left: Box::new(left), right: Box::new(right) }
    }

    /// Literal leaves in left-to-right order.
    pub fn literals(&self) -> Vec<u64> {
        let mut out = Vec::new();
        self.collect_literals(&mut out);
        out
    }

    fn collect_literals(&self, out: &mut Vec<u64>) {
        match self {
            Expr::Lit(n) => out.push(*n),
            Expr::Bin { left, right, .. } => {
                left.collect_literals(out);
                right.collect_literals(out);
            }
        }
    }

    pub fn evaluate(&self) -> Result<Rational, ArithmeticError> {
        evaluate_exact(self)
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent: Op, is_right: bool) -> fmt::Result {
        let needs_parens = match self {
            Expr::Lit(_) => false,
            Expr::Bin { op, .. } => {
                op.precedence() < parent.precedence()
                    || (is_right && op.precedence() == parent.precedence())
            }
        };
        if needs_parens {
            write!(f, "({})", self)
        } else {
            write!(f, "{}", self)
        }
    }
}

impl fmt::Display for Expr {
    /// Renders with the minimal parentheses that re-parse to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(n) => write!(f, "{n}"),
            Expr::Bin { op, left, right } => {
                left.fmt_child(f, *op, false)?;
                write!(f, "{}", op.symbol())?;
                right.fmt_child(f, *op, true)
            }
        }
    }
}

pub fn evaluate_exact(e: &Expr) -> Result<Rational, ArithmeticError> {
    match e {
        Expr::Lit(n) => Ok(Rational::from_integer(*n as i128)),
        Expr::Bin { op, left, right } => op.apply(evaluate_exact(left)?, evaluate_exact(right)?),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unexpected character {found:?} at position {pos}")]
    UnknownSymbol { pos: usize, found: char },
    #[error("expected a number or '(' at position {pos}")]
    MissingOperand { pos: usize },
    #[error("unbalanced parenthesis at position {pos}")]
    Unbalanced { pos: usize },
    #[error("unexpected {found:?} at position {pos}")]
    Trailing { pos: usize, found: char },
    #[error("number at position {pos} is too large")]
    NumberTooLarge { pos: usize },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    Num(u64),
    Op(Op),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut toks = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        let tok = match c {
            c if c.is_whitespace() => {
                chars.next();
                continue;
            }
            '0'..='9' => {
                let mut value: u64 = 0;
                while let Some(&(p, d)) = chars.peek() {
                    match d.to_digit(10) {
                        Some(v) => {
                            value = value
                                .checked_mul(10)
                                .and_then(|x| x.checked_add(v as u64))
                                .ok_or(ParseError::NumberTooLarge { pos: p })?;
                            chars.next();
                        }
                        None => break,
                    }
                }
                toks.push((pos, Tok::Num(value)));
                continue;
            }
            '+' => Tok::Op(Op::Add),
            '-' | '\u{2212}' | '\u{2013}' => Tok::Op(Op::Sub),
            '*' | '\u{00d7}' | '\u{22c5}' => Tok::Op(Op::Mul),
            '/' | '\u{00f7}' => Tok::Op(Op::Div),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            other => return Err(ParseError::UnknownSymbol { pos, found: other }),
        };
        chars.next();
        toks.push((pos, tok));
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.idx).map(|t| t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |t| t.0)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ (Op::Add | Op::Sub))) = self.peek() {
            self.idx += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(Tok::Op(op @ (Op::Mul | Op::Div))) = self.peek() {
            self.idx += 1;
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek() {
            Some(Tok::Num(n)) => {
                self.idx += 1;
                Ok(Expr::Lit(n))
            }
            Some(Tok::LParen) => {
                self.idx += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.idx += 1;
                        Ok(inner)
                    }
                    _ => Err(ParseError::Unbalanced { pos }),
                }
            }
            _ => Err(ParseError::MissingOperand { pos }),
        }
    }
}

/// Parses `+ - * /` (and the unicode `− × ÷`) with the usual precedence and
/// left associativity. Unary minus is not part of the grammar.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser { toks, idx: 0, end: text.len() };
    let e = p.expr()?;
    if let Some((pos, tok)) = p.toks.get(p.idx).copied() {
        return Err(match tok {
            Tok::RParen => ParseError::Unbalanced { pos },
            _ => ParseError::Trailing { pos, found: text[pos..].chars().next().unwrap_or(' ') },
        });
    }
    Ok(e)
}

pub fn render(e: &Expr) -> String {
    use alloc::string::ToString;
    e.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn product_of_differences_has_mul_root() {
        let e = parse_expression("(10-4)*(5-1)").unwrap();
        match &e {
            Expr::Bin { op: Op::Mul, left, right } => {
                assert_eq!(**left, Expr::bin(Op::Sub, Expr::Lit(10), Expr::Lit(4)));
                assert_eq!(**right, Expr::bin(Op::Sub, Expr::Lit(5), Expr::Lit(1)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn nested_division_is_right_deep() {
        let e = parse_expression("8/(3-8/3)").unwrap();
        let expected = Expr::bin(
            Op::Div,
            Expr::Lit(8),
            Expr::bin(Op::Sub, Expr::Lit(3), Expr::bin(Op::Div, Expr::Lit(8), Expr::Lit(3))),
        );
        assert_eq!(e, expected);
        assert!(e.evaluate().unwrap().is_integer(24));
    }

    #[test]
    fn double_star_is_rejected() {
        assert_eq!(parse_expression("2**3"), Err(ParseError::MissingOperand { pos: 2 }));
    }

    #[test]
    fn error_cases() {
        assert!(matches!(parse_expression("(1+2"), Err(ParseError::Unbalanced { pos: 0 })));
        assert!(matches!(parse_expression("1+2)"), Err(ParseError::Unbalanced { pos: 3 })));
        assert!(matches!(parse_expression("1+"), Err(ParseError::MissingOperand { pos: 2 })));
        assert!(matches!(parse_expression("-1+2"), Err(ParseError::MissingOperand { pos: 0 })));
        assert!(matches!(parse_expression("2^3"), Err(ParseError::UnknownSymbol { pos: 1, .. })));
        assert!(matches!(parse_expression("  "), Err(ParseError::Empty)));
    }

    #[test]
    fn unicode_operators() {
        let e = parse_expression("(10 − 4) × (5 − 1)").unwrap();
        assert!(e.evaluate().unwrap().is_integer(24));
        assert!(parse_expression("12 ÷ 3").unwrap().evaluate().unwrap().is_integer(4));
    }

    #[test]
    fn left_associativity() {
        let e = parse_expression("8-4-2").unwrap();
        assert!(e.evaluate().unwrap().is_integer(2));
        assert_eq!(e.to_string(), "8-4-2");
        let r = parse_expression("8-(4-2)").unwrap();
        assert_eq!(r.to_string(), "8-(4-2)");
    }

    #[test]
    fn exact_evaluation_examples() {
        assert!(parse_expression("1*2*3*4").unwrap().evaluate().unwrap().is_integer(24));
        assert_eq!(
            parse_expression("4/(1-1)").unwrap().evaluate(),
            Err(ArithmeticError::DivisionByZero)
        );
    }

    fn arb_expr() -> impl proptest::strategy::Strategy<Value = Expr> {
        use proptest::prelude::*;
        let leaf = (0u64..20).prop_map(Expr::Lit);
        leaf.prop_recursive(4, 16, 2, |inner| {
            (0usize..4, inner.clone(), inner).prop_map(|(i, l, r)| Expr::bin(Op::ALL[i], l, r))
        })
    }

    proptest::proptest! {
        #[test]
        fn render_then_parse_is_identity(e in arb_expr()) {
            let text = render(&e);
            proptest::prop_assert_eq!(parse_expression(&text).unwrap(), e);
        }
    }
}
