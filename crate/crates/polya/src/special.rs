//! Special-function kernel: log-Gamma, reciprocal Gamma, rising factorials, Lah and
//! Stirling numbers, Beta.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Exact rational number, always kept in lowest terms with a positive denominator.
pub type ExactRational = BigRational;

/// A real number that may be held in log space.
///
/// Without `log_scale` the quantity is `value`. With `log_scale = Some(l)` the quantity is
/// `value · exp(l)` where `value` carries only the sign (`1.0`, `-1.0` or `0.0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealValue {
    pub value: f64,
    pub log_scale: Option<f64>,
}

impl RealValue {
    pub fn new(value: f64) -> Self {
        RealValue { value, log_scale: None }
    }

    pub fn from_log(sign: f64, ln_abs: f64) -> Self {
        RealValue { value: sign_of(sign), log_scale: Some(ln_abs) }
    }

    pub fn to_f64(&self) -> f64 {
        match self.log_scale {
            None => self.value,
            Some(_) if self.value == 0.0 => 0.0,
            Some(l) => self.value * l.exp(),
        }
    }

    pub fn ln_abs(&self) -> f64 {
        match self.log_scale {
            None => self.value.abs().ln(),
            Some(_) if self.value == 0.0 => f64::NEG_INFINITY,
            Some(l) => l,
        }
    }

    pub fn mul(&self, other: &RealValue) -> RealValue {
        RealValue::from_log(
            sign_of(self.value) * sign_of(other.value),
            self.ln_abs() + other.ln_abs(),
        )
    }
}

fn sign_of(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

// Lanczos coefficients for g = 671/128, 14 terms (Numerical Recipes, 3rd ed., `gammln`).
const LANCZOS_G_SHIFT: f64 = 5.242_187_5;
const LANCZOS_C0: f64 = 0.999_999_999_999_997_1;
const LANCZOS: [f64; 14] = [
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    3.399_464_998_481_189e-5,
    4.652_362_892_704_858e-5,
    -9.837_447_530_487_956e-5,
    1.580_887_032_249_125e-4,
    -2.102_644_417_241_048_8e-4,
    2.174_396_181_152_126_5e-4,
    -1.643_181_065_367_639e-4,
    8.441_822_398_385_275e-5,
    -2.619_083_840_158_140_8e-5,
    3.689_918_265_953_162_5e-6,
];
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// ln Γ(x) for x > 0 without argument checks.
pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let tmp = x + LANCZOS_G_SHIFT;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = LANCZOS_C0;
    let mut y = x;
    for c in LANCZOS {
        y += 1.0;
        ser += c / y;
    }
    tmp + (SQRT_2PI * ser / x).ln()
}

/// Natural logarithm of Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("log_gamma requires x > 0, got {x}"));
    }
    Ok(ln_gamma_unchecked(x))
}

/// sin(πx) with exact zeros at integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r < 0.5 {
        (PI * r).sin()
    } else if r < 1.5 {
        (PI * (1.0 - r)).sin()
    } else {
        (PI * (r - 2.0)).sin()
    }
}

/// Sign and ln|·| of 1/Γ(x); sign 0 at the poles of Γ.
pub fn reciprocal_gamma_log(x: f64) -> (f64, f64) {
    if x > 0.0 {
        return (1.0, -ln_gamma_unchecked(x));
    }
    if x == x.floor() {
        return (0.0, f64::NEG_INFINITY);
    }
    // 1/Γ(x) = Γ(1−x) sin(πx) / π
    let s = sin_pi(x);
    (s.signum(), ln_gamma_unchecked(1.0 - x) + s.abs().ln() - PI.ln())
}

/// 1/Γ(x) on the whole real line, exactly 0 at 0, −1, −2, …
pub fn reciprocal_gamma(x: f64) -> f64 {
    let (sign, ln_abs) = reciprocal_gamma_log(x);
    if sign == 0.0 {
        0.0
    } else {
        sign * ln_abs.exp()
    }
}

/// x(x+1)⋯(x+s−1), forward product.
pub fn rising_factorial(x: f64, s: u32) -> f64 {
    (0..s).fold(1.0, |acc, i| acc * (x + i as f64))
}

/// Exact rising factorial.
pub fn rising_factorial_exact(x: &ExactRational, s: u32) -> ExactRational {
    let mut acc = ExactRational::one();
    let mut term = x.clone();
    for _ in 0..s {
        acc *= &term;
        term += ExactRational::one();
    }
    acc
}

/// ln B(a, b) for a, b > 0.
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return domain(format!("beta requires positive arguments, got ({a}, {b})"));
    }
    Ok(ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b))
}

pub fn beta(a: f64, b: f64) -> Result<f64> {
    log_beta(a, b).map(f64::exp)
}

fn factorial(n: u32) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * BigUint::from(k))
}

pub fn binomial(n: u32, k: u32) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Unsigned Lah number binom(s,r)·(s−1)!/(r−1)!, with L(s,0) = 0 for s ≥ 1 and L(0,0) = 1.
pub fn lah_number(s: u32, r: u32) -> Result<BigUint> {
    if r > s {
        return domain(format!("lah_number requires r ≤ s, got s={s}, r={r}"));
    }
    if r == 0 {
        return Ok(if s == 0 { BigUint::one() } else { BigUint::zero() });
    }
    Ok(binomial(s, r) * factorial(s - 1) / factorial(r - 1))
}

/// Stirling number of the second kind.
pub fn stirling2(s: u32, r: u32) -> BigUint {
    if r > s {
        return BigUint::zero();
    }
    let mut row = vec![BigUint::one()];
    for n in 1..=s as usize {
        let mut next = vec![BigUint::zero(); n + 1];
        for k in 1..=n {
            let carry = if k - 1 < row.len() { row[k - 1].clone() } else { BigUint::zero() };
            let stay = if k < row.len() { &row[k] * BigUint::from(k) } else { BigUint::zero() };
            next[k] = carry + stay;
        }
        row = next;
    }
    row[r as usize].clone()
}

/// Parse "a", "a/b" or a decimal literal "1.25" into an exact rational.
pub fn parse_rational(text: &str) -> Result<ExactRational> {
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| crate::Error::Parse(format!("bad numerator in {t:?}")))?;
        let d: BigInt = d.trim().parse().map_err(|_| crate::Error::Parse(format!("bad denominator in {t:?}")))?;
        if d.is_zero() {
            return Err(crate::Error::Parse(format!("zero denominator in {t:?}")));
        }
        return Ok(ExactRational::new(n, d));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| crate::Error::Parse(format!("bad exponent in {t:?}")))?),
        None => (t, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let negative = int_part.starts_with('-');
    let digits = format!("{}{}", int_part.trim_start_matches(['-', '+']), frac_part);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(crate::Error::Parse(format!("not a number: {t:?}")));
    }
    let mut value = ExactRational::from_integer(digits.parse::<BigInt>().unwrap());
    let scale = exponent - frac_part.len() as i32;
    let ten = ExactRational::from_integer(BigInt::from(10));
    for _ in 0..scale.unsigned_abs() {
        if scale > 0 {
            value *= &ten;
        } else {
            value /= &ten;
        }
    }
    Ok(if negative { -value } else { value })
}

/// Exact rational equal to the shortest decimal that round-trips to `x`.
pub fn rational_from_f64(x: f64) -> Result<ExactRational> {
    if !x.is_finite() {
        return domain(format!("non-finite parameter {x}"));
    }
    parse_rational(&format!("{x:e}"))
}

pub fn rational_to_f64(q: &ExactRational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}
