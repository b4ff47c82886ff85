//! Game of 24: exact expression evaluation, verification, and an exhaustive solver.

mod expr;
mod rational;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use expr::{evaluate_exact, parse_expression, render, Expr, Op, ParseError};
pub use rational::{ArithmeticError, Rational};

use crate::verdict::Verdict;

pub const TARGET: i128 = 24;

fn multiset(values: &[u64]) -> BTreeMap<u64, usize> {
    let mut m = BTreeMap::new();
    for v in values {
        *m.entry(*v).or_insert(0) += 1;
    }
    m
}

fn join(values: &[u64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

/// Describes how the literal multiset of an expression differs from the inputs.
fn multiset_mismatch(used: &[u64], inputs: &[u64]) -> Option<String> {
    let used_m = multiset(used);
    let input_m = multiset(inputs);
    let mut unused = Vec::new();
    let mut extra = Vec::new();
    for (v, &n) in &input_m {
        let u = used_m.get(v).copied().unwrap_or(0);
        for _ in u..n {
            unused.push(*v);
        }
    }
    for (v, &n) in &used_m {
        let have = input_m.get(v).copied().unwrap_or(0);
        for _ in have..n {
            extra.push(*v);
        }
    }
    if unused.is_empty() && extra.is_empty() {
        return None;
    }
    let mut parts = Vec::new();
    if !unused.is_empty() {
        parts.push(format!("numbers {} unused", join(&unused)));
    }
    if !extra.is_empty() {
        parts.push(format!("numbers {} not available from the inputs {}", join(&extra), join(inputs)));
    }
    Some(parts.join("; "))
}

/// Passes iff the text parses, uses exactly the input multiset, and equals 24.
pub fn verify_game24(expr_text: &str, inputs: &[u64]) -> Verdict {
    let e = match parse_expression(expr_text) {
        Ok(e) => e,
        Err(err) => return Verdict::fail(format!("the expression `{expr_text}` is malformed: {err}")),
    };
    if let Some(why) = multiset_mismatch(&e.literals(), inputs) {
        return Verdict::fail(format!(
            "the expression `{expr_text}` must use each of {} exactly once: {why}",
            join(inputs)
        ));
    }
    match e.evaluate() {
        Err(ArithmeticError::DivisionByZero) => {
            Verdict::fail(format!("the expression `{expr_text}` divides by zero"))
        }
        Err(err) => Verdict::fail(format!("the expression `{expr_text}` cannot be evaluated: {err}")),
        Ok(v) if v.is_integer(TARGET) => Verdict::pass(),
        Ok(v) => Verdict::fail(format!("the expression `{expr_text}` evaluates to {v}, not 24")),
    }
}

fn permutations4(items: [u64; 4]) -> Vec<[u64; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            if b == a {
                continue;
            }
            for c in 0..4 {
                if c == a || c == b {
                    continue;
                }
                let d = 6 - a - b - c;
                out.push([items[a], items[b], items[c], items[d]]);
            }
        }
    }
    out
}

/// The five binary-tree shapes over four ordered leaves.
fn shapes(n: [u64; 4], o: [Op; 3]) -> [Expr; 5] {
    let l = |i: usize| Expr::Lit(n[i]);
    [
        Expr::bin(o[2], Expr::bin(o[1], Expr::bin(o[0], l(0), l(1)), l(2)), l(3)),
        Expr::bin(o[2], Expr::bin(o[0], l(0), Expr::bin(o[1], l(1), l(2))), l(3)),
        Expr::bin(o[1], Expr::bin(o[0], l(0), l(1)), Expr::bin(o[2], l(2), l(3))),
        Expr::bin(o[0], l(0), Expr::bin(o[2], Expr::bin(o[1], l(1), l(2)), l(3))),
        Expr::bin(o[0], l(0), Expr::bin(o[1], l(1), Expr::bin(o[2], l(2), l(3)))),
    ]
}

/// Exhaustive search over operand orders, operator triples, and tree shapes.
pub fn solve24(inputs: [u64; 4]) -> Option<Expr> {
    for perm in permutations4(inputs) {
        for a in Op::ALL {
            for b in Op::ALL {
                for c in Op::ALL {
                    for e in shapes(perm, [a, b, c]) {
                        if matches!(e.evaluate(), Ok(v) if v.is_integer(TARGET)) {
                            return Some(e);
                        }
                    }
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_examples() {
        assert!(verify_game24("(10-4)*(5-1)", &[10, 4, 5, 1]).pass);
        let v = verify_game24("6*4", &[6, 4, 1, 1]);
        assert!(!v.pass);
        assert!(v.feedback.unwrap().contains("numbers 1,1 unused"));
        let v = verify_game24("(10-4)*(5-1)", &[10, 4, 5, 2]);
        assert!(!v.pass);
        let fb = v.feedback.unwrap();
        assert!(fb.contains("numbers 2 unused") && fb.contains("numbers 1 not available"), "{fb}");
    }

    #[test]
    fn verify_reports_value_and_zero_division() {
        let v = verify_game24("(10+4)*(5-1)", &[10, 4, 5, 1]);
        assert!(v.feedback.unwrap().contains("evaluates to 56"));
        let v = verify_game24("4/(1-1)*6", &[4, 1, 1, 6]);
        assert!(v.feedback.unwrap().contains("divides by zero"));
        let v = verify_game24("4/(1-1", &[4, 1, 1, 6]);
        assert!(v.feedback.unwrap().contains("malformed"));
    }

    #[test]
    fn solver_examples() {
        let w = solve24([1, 2, 3, 4]).unwrap();
        assert!(verify_game24(&render(&w), &[1, 2, 3, 4]).pass);
        assert!(solve24([1, 1, 1, 1]).is_none());
        let w = solve24([3, 3, 8, 8]).unwrap();
        assert!(verify_game24(&render(&w), &[3, 3, 8, 8]).pass);
        // the only solution routes through 8/3
        assert!(w.literals().iter().filter(|&&x| x == 8).count() == 2);
    }

    #[test]
    fn permutations_are_distinct_orderings() {
        let p = permutations4([1, 2, 3, 4]);
        assert_eq!(p.len(), 24);
        let mut sorted = p.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
    }
}
