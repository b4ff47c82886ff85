use core::cmp::Ordering;
use core::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ArithmeticError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
}

/// Exact rational number in lowest terms with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };

    pub fn new(num: i128, den: i128) -> Result<Self, ArithmeticError> {
        if den == 0 {
            return Err(ArithmeticError::DivisionByZero);
        }
        let g = gcd(num, den).max(1);
        let (mut num, mut den) = (num / g, den / g);
        if den < 0 {
            num = num.checked_neg().ok_or(ArithmeticError::Overflow)?;
            den = den.checked_neg().ok_or(ArithmeticError::Overflow)?;
        }
        Ok(Self { num, den })
    }

    pub fn from_integer(n: i128) -> Self {
        Self { num: n, den: 1 }
    }

    pub fn numerator(&self) -> i128 {
        self.num
    }

    pub fn denominator(&self) -> i128 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn is_integer(&self, n: i128) -> bool {
        self.den == 1 && self.num == n
    }

    pub fn checked_add(self, rhs: Self) -> Result<Self, ArithmeticError> {
        let num = self
            .num
            .checked_mul(rhs.den)
            .and_then(|a| rhs.num.checked_mul(self.den).and_then(|b| a.checked_add(b)))
            .ok_or(ArithmeticError::Overflow)?;
        let den = self.den.checked_mul(rhs.den).ok_or(ArithmeticError::Overflow)?;
        Self::new(num, den)
    }

    pub fn checked_sub(self, rhs: Self) -> Result<Self, ArithmeticError> {
        let neg = Self {
            num: rhs.num.checked_neg().ok_or(ArithmeticError::Overflow)?,
            den: rhs.den,
        };
        self.checked_add(neg)
    }

    pub fn checked_mul(self, rhs: Self) -> Result<Self, ArithmeticError> {
        let num = self.num.checked_mul(rhs.num).ok_or(ArithmeticError::Overflow)?;
        let den = self.den.checked_mul(rhs.den).ok_or(ArithmeticError::Overflow)?;
        Self::new(num, den)
    }

    pub fn checked_div(self, rhs: Self) -> Result<Self, ArithmeticError> {
        if rhs.num == 0 {
            return Err(ArithmeticError::DivisionByZero);
        }
        let num = self.num.checked_mul(rhs.den).ok_or(ArithmeticError::Overflow)?;
        let den = self.den.checked_mul(rhs.num).ok_or(ArithmeticError::Overflow)?;
        Self::new(num, den)
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        // denominators are positive, so cross-multiplication preserves order
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}
