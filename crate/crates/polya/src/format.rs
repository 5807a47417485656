//! Number rendering for exact and float output modes.

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::special::ExactRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Float,
}

impl Mode {
    /// Exact arithmetic up to N = 10^4, floating point beyond.
    pub fn auto(n: u64) -> Mode {
        if n <= 10_000 {
            Mode::Exact
        } else {
            Mode::Float
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Mode> {
        match s {
            "exact" => Ok(Mode::Exact),
            "float" => Ok(Mode::Float),
            other => Err(crate::Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

/// "num/den", or just "num" for integers.
pub fn format_exact(q: &ExactRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Decimal rendering with 15 significant digits.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.14e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-6..=15).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (14 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering() {
        assert_eq!(format_float(1.5164042644682683), "1.51640426446827");
        assert_eq!(format_float(2.0), "2");
        assert_eq!(format_float(-0.00338), "-0.00338");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333333333");
        assert_eq!(format_float(6.02e23), "6.02e23");
        assert_eq!(format_float(12345.678), "12345.678");
    }

    #[test]
    fn exact_rendering() {
        assert_eq!(format_exact(&ExactRational::new(14.into(), 3.into())), "14/3");
        assert_eq!(format_exact(&ExactRational::new(4.into(), 2.into())), "2");
    }
}
