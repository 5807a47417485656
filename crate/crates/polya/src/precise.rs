//! The limit density series in MPFR arithmetic, for arguments where the double-precision sum cancels.

use num_traits::{One, Signed};
use rug::ops::Pow;
use rug::{Float, Rational};

use crate::error::{Error, Result};
use crate::moments::DensityEvaluation;
use crate::special::ExactRational;
use crate::urn::{Family, UrnSpec};

const START_PRECISION: u32 = 256;
const MAX_PRECISION: u32 = 1 << 15;
const MAX_TERMS: usize = 200_000;
/// Absolute accuracy asked of every evaluation.
const ABSOLUTE_TOL: f64 = 1e-30;

/// Exact inputs of the series Σ_j a_j x^{j+c−1}.
#[derive(Clone, Debug)]
struct SeriesParams {
    p: u64,
    psi_inv: ExactRational,
    z: ExactRational,
    b_shift: ExactRational,
    h: ExactRational,
    c: ExactRational,
}

fn series_params(spec: &UrnSpec) -> Result<SeriesParams> {
    let init: Vec<ExactRational> = spec.initial().iter().map(|q| q.exact().clone()).collect();
    if init.len() != 2 {
        return Err(Error::Unsupported("limit density needs a two-color urn".into()));
    }
    let total = &init[0] + &init[1];
    let int = |n: u64| ExactRational::from_integer(n.into());
    match spec.family() {
        Family::PolyaYoung { p, sigma, ell } => {
            let sigma = sigma.exact();
            let psi = int(*p) + ell.exact() / sigma;
            Ok(SeriesParams {
                p: *p,
                psi_inv: psi.recip(),
                z: &total / (&psi * sigma),
                b_shift: &init[1] / (&psi * sigma),
                h: psi.recip(),
                c: &init[0] / sigma,
            })
        }
        Family::Triangular { p, sigma, ell1, ell2 } => {
            let sigma = sigma.exact();
            let s1 = sigma + ell1.exact();
            let psi = int(*p) + (ell2.exact() - ell1.exact()) / &s1;
            Ok(SeriesParams {
                p: *p,
                psi_inv: psi.recip(),
                z: &total / (&s1 * &psi),
                b_shift: &init[1] / (&s1 * &psi),
                h: sigma / (&s1 * &psi),
                c: &init[0] / sigma,
            })
        }
        _ => Err(Error::Unsupported("limit density needs a Pólya-Young or triangular urn".into())),
    }
}

fn to_rug(q: &ExactRational) -> Rational {
    format!("{}/{}", q.numer(), q.denom()).parse().expect("rational literal")
}

fn is_pole(q: &ExactRational) -> bool {
    q.is_integer() && !q.is_positive()
}

/// Coefficients a_j, including the Γ prefactor, computed on demand at a fixed precision.
pub(crate) struct PreciseDensity {
    params: SeriesParams,
    prec: u32,
    coefficients: Vec<Float>,
    prefactor: Float,
    factorial: Float,
}

impl PreciseDensity {
    pub(crate) fn new(spec: &UrnSpec) -> Result<Self> {
        let params = series_params(spec)?;
        Ok(Self::at_precision(params, START_PRECISION))
    }

    fn at_precision(params: SeriesParams, prec: u32) -> Self {
        let mut prefactor = Float::with_val(prec, 1);
        for r in 0..params.p {
            let arg = ExactRational::from_integer(r.into()) * &params.psi_inv + &params.z;
            prefactor *= Float::with_val(prec, &to_rug(&arg)).gamma();
        }
        prefactor /= Float::with_val(prec, &to_rug(&params.c)).gamma();
        PreciseDensity { params, prec, coefficients: Vec::new(), prefactor, factorial: Float::with_val(prec, 1) }
    }

    fn coefficient(&mut self, j: usize) -> &Float {
        while self.coefficients.len() <= j {
            let k = self.coefficients.len();
            if k > 0 {
                self.factorial *= k as u32;
            }
            let shift = ExactRational::from_integer(k.into()) * &self.params.h;
            let mut a = Float::with_val(self.prec, &self.prefactor) / &self.factorial;
            if k % 2 == 1 {
                a = -a;
            }
            for r in 0..self.params.p {
                let arg = ExactRational::from_integer(r.into()) * &self.params.psi_inv + &self.params.b_shift - &shift;
                if is_pole(&arg) {
                    a = Float::with_val(self.prec, 0);
                    break;
                }
                a /= Float::with_val(self.prec, &to_rug(&arg)).gamma();
            }
            self.coefficients.push(a);
        }
        &self.coefficients[j]
    }

    /// Sums the series at x; None when the precision is too low for the cancellation at x.
    fn try_eval(&mut self, x: f64) -> Option<DensityEvaluation> {
        let prec = self.prec;
        let xf = Float::with_val(prec, x);
        let mut power = Float::with_val(prec, &to_rug(&(&self.params.c - ExactRational::one())));
        power = Float::with_val(prec, (&xf).pow(&power));
        let mut sum = Float::with_val(prec, 0);
        let mut max_term: f64 = 0.0;
        let mut last = f64::INFINITY;
        let mut quiet = 0;
        for j in 0..MAX_TERMS {
            let term = Float::with_val(prec, self.coefficient(j) * &power);
            let size = term.to_f64().abs();
            sum += &term;
            power *= &xf;
            max_term = max_term.max(size);
            if size <= last && size < ABSOLUTE_TOL * 1e-3 && !self.coefficients[j].is_zero() {
                quiet += 1;
                if quiet == 3 {
                    let rounding = max_term * 2f64.powi(-(prec as i32)) * ((j + 1) as f64).sqrt() * 4.0;
                    if rounding > ABSOLUTE_TOL {
                        return None;
                    }
                    return Some(DensityEvaluation { value: sum.to_f64(), rounding_error: rounding, terms: j + 1 });
                }
            } else if !self.coefficients[j].is_zero() {
                quiet = 0;
            }
            if !self.coefficients[j].is_zero() {
                last = size;
            }
        }
        None
    }

    pub(crate) fn eval(&mut self, x: f64) -> Result<DensityEvaluation> {
        loop {
            if let Some(ev) = self.try_eval(x) {
                return Ok(ev);
            }
            if self.prec >= MAX_PRECISION {
                return Err(Error::Cancellation(format!("density series needs more than {MAX_PRECISION} bits at x = {x}")));
            }
            let params = self.params.clone();
            *self = Self::at_precision(params, self.prec * 2);
        }
    }
}
