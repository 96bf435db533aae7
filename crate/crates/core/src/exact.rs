//! Exact rational scalars with a JSON form of `[numerator, denominator]`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(pub BigRational);

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    /// `2^-k`.
    pub fn dyadic(k: u32) -> Self {
        Rational(BigRational::new(BigInt::one(), BigInt::one() << k))
    }

    /// Exact conversion (every finite double is a dyadic rational).
    pub fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(Rational)
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn half(&self) -> Self {
        self / &Rational::integer(2)
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident) => {
        impl $tr<&Rational> for &Rational {
            type Output = Rational;
            fn $m(self, rhs: &Rational) -> Rational {
                Rational((&self.0).$m(&rhs.0))
            }
        }
        impl $tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational(self.0.$m(rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl std::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |a, b| a + b)
    }
}

impl<'a> std::iter::Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |a, b| &a + b)
    }
}

impl PartialEq<i64> for Rational {
    fn eq(&self, other: &i64) -> bool {
        self.0 == BigRational::from_integer(BigInt::from(*other))
    }
}

impl PartialOrd<i64> for Rational {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        self.0
            .partial_cmp(&BigRational::from_integer(BigInt::from(*other)))
    }
}

fn int_to_json(n: &BigInt) -> serde_json::Value {
    match n.to_i64() {
        Some(v) => serde_json::Value::from(v),
        None => serde_json::Value::from(n.to_string()),
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&int_to_json(self.0.numer()))?;
        t.serialize_element(&int_to_json(self.0.denom()))?;
        t.end()
    }
}

fn json_to_int<E: de::Error>(v: &serde_json::Value) -> Result<BigInt, E> {
    match v {
        serde_json::Value::Number(n) => n
            .as_i64()
            .map(BigInt::from)
            .ok_or_else(|| E::custom(format!("non-integer rational component {n}"))),
        serde_json::Value::String(s) => s
            .parse::<BigInt>()
            .map_err(|_| E::custom(format!("bad integer string {s:?}"))),
        other => Err(E::custom(format!("bad rational component {other}"))),
    }
}

/// Accepts `[num, den]` (integers or integer strings) or a plain float,
/// which is converted exactly.
impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::Array(parts) if parts.len() == 2 => {
                let num = json_to_int::<D::Error>(&parts[0])?;
                let den = json_to_int::<D::Error>(&parts[1])?;
                if den.is_zero() {
                    return Err(de::Error::custom("zero denominator"));
                }
                Ok(Rational(BigRational::new(num, den)))
            }
            serde_json::Value::Number(n) => n
                .as_f64()
                .and_then(Rational::from_f64)
                .ok_or_else(|| de::Error::custom("non-finite number")),
            other => Err(de::Error::custom(format!(
                "expected [numerator, denominator], got {other}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_forms() {
        let r = Rational::new(3, 8);
        assert_eq!(serde_json::to_string(&r).unwrap(), "[3,8]");
        let back: Rational = serde_json::from_str("[3,8]").unwrap();
        assert_eq!(back, r);
        let f: Rational = serde_json::from_str("0.375").unwrap();
        assert_eq!(f, r);
        let big: Rational = serde_json::from_str(r#"["1","340282366920938463463374607431768211456"]"#).unwrap();
        assert_eq!(big, Rational::dyadic(128));
        assert!(serde_json::from_str::<Rational>("[1,0]").is_err());
    }

    #[test]
    fn arithmetic() {
        let a = Rational::dyadic(1);
        let b = Rational::dyadic(2);
        assert_eq!(&a - &b, Rational::new(1, 4));
        assert_eq!((&a + &b).to_string(), "3/4");
        assert!(a > b);
        assert_eq!(Rational::new(3, 4).half(), Rational::new(3, 8));
    }
}
