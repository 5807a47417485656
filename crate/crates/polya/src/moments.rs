//! Finite-N and limiting moment formulas for Pólya-Young and periodic triangular urns.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::format::{format_exact, format_float, Mode};
use crate::precise::PreciseDensity;
use crate::rng::CompensatedSum;
use crate::special::{
    lah_number, ln_gamma_unchecked, rational_to_f64, reciprocal_gamma_log, rising_factorial,
    rising_factorial_exact, stirling2, ExactRational,
};
use crate::urn::{exact_pmf_dp, Family, UrnSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum MomentValue {
    Exact(ExactRational),
    Float(f64),
}

impl MomentValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            MomentValue::Exact(q) => rational_to_f64(q),
            MomentValue::Float(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&ExactRational> {
        match self {
            MomentValue::Exact(q) => Some(q),
            MomentValue::Float(_) => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            MomentValue::Exact(q) => format_exact(q),
            MomentValue::Float(x) => format_float(*x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    FiniteRising { n: u64 },
    FiniteRaw { n: u64 },
    LimitMoment { normalization: String },
    LawComponent { law: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentSequence {
    pub values: Vec<MomentValue>,
    pub mode: Mode,
    pub provenance: Provenance,
}

impl MomentSequence {
    pub fn floats(&self) -> Vec<f64> {
        self.values.iter().map(MomentValue::to_f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mode = match self.mode {
            Mode::Exact => "exact",
            Mode::Float => "float",
        };
        let mut out = String::from("s,value,mode\n");
        for (s, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{s},{},{mode}\n", v.render()));
        }
        out
    }
}

/// Reduced rational that is cheap to multiply by ratios of small integers.
#[derive(Clone, Debug)]
pub struct ExactAccumulator {
    num: BigInt,
    den: BigInt,
}

impl ExactAccumulator {
    pub fn new(q: &ExactRational) -> Self {
        ExactAccumulator { num: q.numer().clone(), den: q.denom().clone() }
    }

    pub fn one() -> Self {
        ExactAccumulator { num: BigInt::one(), den: BigInt::one() }
    }

    /// Multiply by a (small) rational, keeping lowest terms with only small gcds.
    pub fn mul(&mut self, q: &ExactRational) {
        let (c, d) = (q.numer(), q.denom());
        if c.is_zero() {
            self.num = BigInt::zero();
            self.den = BigInt::one();
            return;
        }
        let g1 = d.gcd(&self.num.mod_floor(d));
        let g2 = c.abs().gcd(&self.den.mod_floor(&c.abs()));
        self.num = &self.num / &g1 * (c / &g2);
        self.den = &self.den / &g2 * (d / &g1);
        if self.den.is_negative() {
            self.num = -&self.num;
            self.den = -&self.den;
        }
    }

    pub fn invert(&self) -> Self {
        let (num, den) = if self.num.is_negative() {
            (-&self.den, -&self.num)
        } else {
            (self.den.clone(), self.num.clone())
        };
        ExactAccumulator { num, den }
    }

    pub fn value(&self) -> ExactRational {
        ExactRational::new_raw(self.num.clone(), self.den.clone())
    }
}

/// The white/black parameters of an urn whose white count moves by +σ on white draws only.
#[derive(Clone, Debug)]
struct RisingShape {
    sigma: ExactRational,
    w0: Vec<ExactRational>,
}

fn rising_shape(spec: &UrnSpec) -> Result<RisingShape> {
    let unsupported = || Error::Unsupported("moment formulas need σ on the diagonal of every non-last color and balanced matrices".into());
    let t = spec.colors();
    let mut sigma: Option<ExactRational> = None;
    for m in spec.schedule().matrices() {
        m.balanced_total().ok_or_else(unsupported)?;
        for i in 0..t {
            for j in 0..t - 1 {
                let e = m.entry(i, j);
                if i == j {
                    match &sigma {
                        Some(s) if s != e => return Err(unsupported()),
                        _ => sigma = Some(e.clone()),
                    }
                } else if !e.is_zero() {
                    return Err(unsupported());
                }
            }
        }
    }
    let sigma = sigma.ok_or_else(unsupported)?;
    if !sigma.is_positive() {
        return Err(unsupported());
    }
    let w0 = spec.initial()[..t - 1].iter().map(|x| x.exact().clone()).collect();
    Ok(RisingShape { sigma, w0 })
}

fn exact_totals(spec: &UrnSpec, n: u64) -> Result<Vec<ExactRational>> {
    let schedule = spec.schedule();
    let adds: Vec<ExactRational> = schedule
        .matrices()
        .iter()
        .map(|m| m.balanced_total().ok_or_else(|| Error::Unsupported("non-deterministic totals".into())))
        .collect::<Result<_>>()?;
    let mut t = spec.initial_total();
    let mut out = Vec::with_capacity(n as usize);
    for draw in 1..=n {
        out.push(t.clone());
        t += &adds[schedule.index_at(draw)];
    }
    Ok(out)
}

/// T_0..T_{n−1} with a compensated running sum.
fn float_totals(spec: &UrnSpec, n: u64) -> Result<Vec<f64>> {
    let mut v = crate::urn::total_sequence_f64(spec, n)?;
    v.truncate(n as usize);
    Ok(v)
}

/// Exact ∏_{j<N} (T_j + a)/T_j for every prefix N = 0..=n_max.
fn exact_shift_products(spec: &UrnSpec, n_max: u64, shift: &ExactRational) -> Result<Vec<ExactRational>> {
    let totals = exact_totals(spec, n_max)?;
    let mut acc = ExactAccumulator::one();
    let mut out = Vec::with_capacity(n_max as usize + 1);
    out.push(acc.value());
    for t in &totals {
        acc.mul(&((t + shift) / t));
        out.push(acc.value());
    }
    Ok(out)
}

fn ln_shift_product(spec: &UrnSpec, n: u64, shift: f64) -> Result<f64> {
    let totals = float_totals(spec, n)?;
    let mut acc = CompensatedSum::new();
    for t in totals {
        acc.add((shift / t).ln_1p());
    }
    Ok(acc.value())
}

/// ln E[(W_N/σ)^{(s)}] in floating point.
pub fn ln_rising_factorial_moment(spec: &UrnSpec, n: u64, s: u32) -> Result<f64> {
    let shape = rising_shape(spec)?;
    let sigma = rational_to_f64(&shape.sigma);
    let c = rational_to_f64(&shape.w0[0]) / sigma;
    Ok(ln_gamma_unchecked(c + s as f64) - ln_gamma_unchecked(c) + ln_shift_product(spec, n, s as f64 * sigma)?)
}

/// E[(W_N/σ)^{(s)}] = (w0/σ)^{(s)} ∏_{j<N} (T_j + sσ)/T_j.
pub fn rising_factorial_moment(spec: &UrnSpec, n: u64, s: u32, mode: Mode) -> Result<MomentValue> {
    let shape = rising_shape(spec)?;
    match mode {
        Mode::Exact => {
            let shift = &shape.sigma * ExactRational::from_integer(s.into());
            let mut acc = ExactAccumulator::new(&rising_factorial_exact(&(&shape.w0[0] / &shape.sigma), s));
            for t in exact_totals(spec, n)? {
                acc.mul(&((&t + &shift) / &t));
            }
            Ok(MomentValue::Exact(acc.value()))
        }
        Mode::Float => Ok(MomentValue::Float(ln_rising_factorial_moment(spec, n, s)?.exp())),
    }
}

/// Exact E[(W_N/σ)^{(s)}] for every N = 0..=n_max.
pub fn rising_factorial_moment_path(spec: &UrnSpec, n_max: u64, s: u32) -> Result<Vec<ExactRational>> {
    let shape = rising_shape(spec)?;
    let shift = &shape.sigma * ExactRational::from_integer(s.into());
    let lead = rising_factorial_exact(&(&shape.w0[0] / &shape.sigma), s);
    let mut out = exact_shift_products(spec, n_max, &shift)?;
    for v in out.iter_mut() {
        *v = &*v * &lead;
    }
    Ok(out)
}

/// g_N = ∏_{j<N} T_j/(T_j+σ).
pub fn g_factor(spec: &UrnSpec, n: u64, mode: Mode) -> Result<MomentValue> {
    let shape = rising_shape(spec)?;
    match mode {
        Mode::Exact => {
            let mut acc = ExactAccumulator::one();
            for t in exact_totals(spec, n)? {
                acc.mul(&(&t / (&t + &shape.sigma)));
            }
            Ok(MomentValue::Exact(acc.value()))
        }
        Mode::Float => Ok(MomentValue::Float((-ln_shift_product(spec, n, rational_to_f64(&shape.sigma))?).exp())),
    }
}

/// Exact g_N for every N = 0..=n_max.
pub fn g_factor_path(spec: &UrnSpec, n_max: u64) -> Result<Vec<ExactRational>> {
    let shape = rising_shape(spec)?;
    let totals = exact_totals(spec, n_max)?;
    let mut acc = ExactAccumulator::one();
    let mut out = vec![acc.value()];
    for t in &totals {
        acc.mul(&(t / (t + &shape.sigma)));
        out.push(acc.value());
    }
    Ok(out)
}

/// g_N for N = 0..=n_max in floating point.
pub fn g_factor_path_f64(spec: &UrnSpec, n_max: u64) -> Result<Vec<f64>> {
    let shape = rising_shape(spec)?;
    let sigma = rational_to_f64(&shape.sigma);
    let totals = float_totals(spec, n_max)?;
    let mut acc = CompensatedSum::new();
    let mut out = Vec::with_capacity(n_max as usize + 1);
    out.push(1.0);
    for t in totals {
        acc.add(-(sigma / t).ln_1p());
        out.push(acc.value().exp());
    }
    Ok(out)
}

/// Raw moments E[W_N^s], s = 0..=s_max.
///
/// Exact mode converts exact rising moments through Stirling numbers and cross-checks
/// them against the exact PMF for N ≤ 400; float mode uses the same conversion in doubles.
pub fn raw_moments(spec: &UrnSpec, n: u64, s_max: u32, mode: Mode) -> Result<MomentSequence> {
    if s_max < 1 {
        return domain("raw_moments needs s_max ≥ 1");
    }
    let shape = rising_shape(spec)?;
    let provenance = Provenance::FiniteRaw { n };
    match mode {
        Mode::Exact => {
            let rising: Vec<ExactRational> = (0..=s_max)
                .map(|r| rising_factorial_moment(spec, n, r, Mode::Exact).map(|v| v.exact().cloned().expect("exact")))
                .collect::<Result<_>>()?;
            let values: Vec<ExactRational> = (0..=s_max)
                .map(|s| {
                    let inner = (0..=s).fold(ExactRational::zero(), |acc, r| {
                        let term = ExactRational::from_integer(BigInt::from(stirling2(s, r))) * &rising[r as usize];
                        if (s - r) % 2 == 0 {
                            acc + term
                        } else {
                            acc - term
                        }
                    });
                    num_traits::pow(shape.sigma.clone(), s as usize) * inner
                })
                .collect();
            if n <= 400 && spec.colors() == 2 {
                let pmf = exact_pmf_dp(spec, n)?;
                for (s, v) in values.iter().enumerate() {
                    if pmf.moment(s as u32) != *v {
                        return Err(Error::Unsupported(format!("raw moment cross-check failed at s={s}")));
                    }
                }
            }
            Ok(MomentSequence { values: values.into_iter().map(MomentValue::Exact).collect(), mode, provenance })
        }
        Mode::Float => {
            let sigma = rational_to_f64(&shape.sigma);
            let rising: Vec<f64> = (0..=s_max).map(|r| ln_rising_factorial_moment(spec, n, r).map(f64::exp)).collect::<Result<_>>()?;
            let values = (0..=s_max)
                .map(|s| {
                    let inner: f64 = (0..=s)
                        .map(|r| {
                            let c = stirling2(s, r).to_f64().unwrap_or(f64::NAN) * rising[r as usize];
                            if (s - r) % 2 == 0 {
                                c
                            } else {
                                -c
                            }
                        })
                        .sum();
                    MomentValue::Float(sigma.powi(s as i32) * inner)
                })
                .collect();
            Ok(MomentSequence { values, mode, provenance })
        }
    }
}

/// Exact E[K_(s)]/s! for K = (W_N − w0)/σ, s = 0..=N, obtained from the rising moments through Lah numbers.
pub fn pgf_coefficients(spec: &UrnSpec, n: u64) -> Result<Vec<ExactRational>> {
    let shape = rising_shape(spec)?;
    if spec.colors() != 2 {
        return Err(Error::Unsupported("PGF needs a two-color urn".into()));
    }
    let c = &shape.w0[0] / &shape.sigma;
    let n32 = u32::try_from(n).map_err(|_| Error::Unsupported("N too large for the PGF".into()))?;
    let x_rising: Vec<ExactRational> = (0..=n32)
        .map(|r| rising_factorial_moment(spec, n, r, Mode::Exact).map(|v| v.exact().cloned().expect("exact")))
        .collect::<Result<_>>()?;
    // (X − c)^{(r)} = Σ_i binom(r,i) X^{(i)} (−c)^{(r−i)}
    let minus_c = -c;
    let k_rising: Vec<ExactRational> = (0..=n32)
        .map(|r| {
            (0..=r).fold(ExactRational::zero(), |acc, i| {
                acc + ExactRational::from_integer(BigInt::from(crate::special::binomial(r, i)))
                    * &x_rising[i as usize]
                    * rising_factorial_exact(&minus_c, r - i)
            })
        })
        .collect();
    // K_(s) = Σ_r (−1)^{s−r} L(s,r) K^{(r)}
    let mut factorial = BigUint::one();
    let mut out = Vec::with_capacity(n32 as usize + 1);
    for s in 0..=n32 {
        if s > 0 {
            factorial *= BigUint::from(s);
        }
        let falling = (0..=s).try_fold(ExactRational::zero(), |acc, r| {
            let term = ExactRational::from_integer(BigInt::from(lah_number(s, r)?)) * &k_rising[r as usize];
            Ok::<_, Error>(if (s - r) % 2 == 0 { acc + term } else { acc - term })
        })?;
        out.push(falling / ExactRational::from_integer(BigInt::from(factorial.clone())));
    }
    Ok(out)
}

const PGF_FLOAT_LIMIT: u64 = 30;

/// E[v^{W_N/σ}] = v^{w0/σ} Σ_s E[K_(s)]/s! (v−1)^s.
pub fn pgf(spec: &UrnSpec, n: u64, v: f64, mode: Mode) -> Result<f64> {
    if mode == Mode::Float && n > PGF_FLOAT_LIMIT {
        return Err(Error::Cancellation(format!(
            "float PGF limited to N ≤ {PGF_FLOAT_LIMIT}; use exact mode or exact_pmf_dp"
        )));
    }
    let shape = rising_shape(spec)?;
    let c = rational_to_f64(&(&shape.w0[0] / &shape.sigma));
    let coeffs = pgf_coefficients(spec, n)?;
    let mut acc = 0.0;
    for (s, a) in coeffs.iter().enumerate() {
        acc += rational_to_f64(a) * (v - 1.0).powi(s as i32);
    }
    Ok(v.powf(c) * acc)
}

/// PMF of W_N recovered from the PGF coefficients.
pub fn pmf_via_lah(spec: &UrnSpec, n: u64, mode: Mode) -> Result<crate::urn::Pmf<ExactRational>> {
    if mode == Mode::Float && n > PGF_FLOAT_LIMIT {
        return Err(Error::Cancellation(format!(
            "float PMF via Lah numbers limited to N ≤ {PGF_FLOAT_LIMIT}; use exact_pmf_dp"
        )));
    }
    let shape = rising_shape(spec)?;
    let coeffs = pgf_coefficients(spec, n)?;
    let n32 = n as u32;
    let mut support = Vec::with_capacity(coeffs.len());
    let mut probabilities = Vec::with_capacity(coeffs.len());
    for k in 0..=n32 {
        let q = (k..=n32).fold(ExactRational::zero(), |acc, s| {
            let term = ExactRational::from_integer(BigInt::from(crate::special::binomial(s, k))) * &coeffs[s as usize];
            if (s - k) % 2 == 0 {
                acc + term
            } else {
                acc - term
            }
        });
        support.push(&shape.w0[0] + &shape.sigma * ExactRational::from_integer(k.into()));
        probabilities.push(q);
    }
    Ok(crate::urn::Pmf { support, probabilities })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    pub psi: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
}

/// Parameters of the Γ-product formulas: μ_s and κ are products over r = 0..p−1 of
/// Γ(r/ψ + z + s·h)/Γ(r/ψ + z) with the values below.
#[derive(Clone, Debug)]
pub(crate) struct GammaProductData {
    pub p: u64,
    pub psi: f64,
    pub lambda: f64,
    pub z: f64,
    /// Shift per unit of s.
    pub h: f64,
    /// b0/(ψ·scale) entering the density series.
    pub b_shift: f64,
    pub sigma1: Option<f64>,
    pub w0_over_sigma: Vec<f64>,
    pub family: &'static str,
}

pub(crate) fn gamma_product_data(spec: &UrnSpec) -> Result<GammaProductData> {
    if spec.phase() != 0 {
        return Err(Error::Unsupported("asymptotic constants assume an unshifted schedule".into()));
    }
    let init = spec.initial_f64();
    let total: f64 = init.iter().sum();
    let t = init.len();
    match spec.family() {
        Family::PolyaYoung { p, sigma, ell } | Family::MulticolorPy { p, sigma, ell, .. } => {
            let (sigma, ell) = (sigma.f64(), ell.f64());
            let psi = *p as f64 + ell / sigma;
            Ok(GammaProductData {
                p: *p,
                psi,
                lambda: *p as f64 / psi,
                z: total / (psi * sigma),
                h: 1.0 / psi,
                b_shift: init[t - 1] / (psi * sigma),
                sigma1: None,
                w0_over_sigma: init[..t - 1].iter().map(|w| w / sigma).collect(),
                family: if t == 2 { "polya_young" } else { "multicolor_py" },
            })
        }
        Family::Triangular { p, sigma, ell1, ell2 } => {
            let (sigma, ell1, ell2) = (sigma.f64(), ell1.f64(), ell2.f64());
            let s1 = sigma + ell1;
            let psi = *p as f64 + (ell2 - ell1) / s1;
            Ok(GammaProductData {
                p: *p,
                psi,
                lambda: *p as f64 * sigma / (s1 * *p as f64 + ell2 - ell1),
                z: total / (s1 * psi),
                h: sigma / (s1 * psi),
                b_shift: init[1] / (s1 * psi),
                sigma1: Some(s1),
                w0_over_sigma: vec![init[0] / sigma],
                family: "triangular",
            })
        }
        _ => Err(Error::Unsupported("asymptotic constants need a Pólya-Young or triangular urn".into())),
    }
}

impl GammaProductData {
    /// ln ∏_r Γ(r/ψ + z)/Γ(r/ψ + z + s·h).
    pub fn ln_product(&self, s: f64) -> f64 {
        (0..self.p)
            .map(|r| {
                let a = r as f64 / self.psi + self.z;
                ln_gamma_unchecked(a) - ln_gamma_unchecked(a + s * self.h)
            })
            .sum()
    }
}

pub fn asymptotic_constants(spec: &UrnSpec) -> Result<AsymptoticConstants> {
    let d = gamma_product_data(spec)?;
    // κ = p^Λ ∏_r Γ(r/ψ + z + σ·h/σ)/Γ(r/ψ + z); in all families the shift for s = 1 is h.
    let kappa = (d.lambda * (d.p as f64).ln() - d.ln_product(1.0)).exp();
    Ok(AsymptoticConstants {
        psi: d.psi,
        lambda: d.lambda,
        kappa,
        family: d.family.into(),
        sigma1: d.sigma1,
    })
}

/// μ_s for real s ≥ 0: the limit of E[(W_N/σ)^s]/n^{sΛ}, n = ⌊N/p⌋.
pub fn limit_moment(spec: &UrnSpec, s: f64) -> Result<f64> {
    let d = gamma_product_data(spec)?;
    let c = d.w0_over_sigma[0];
    Ok((ln_gamma_unchecked(s + c) - ln_gamma_unchecked(c) + d.ln_product(s)).exp())
}

pub fn limit_moments(spec: &UrnSpec, s_max: u32) -> Result<MomentSequence> {
    if s_max < 1 {
        return domain("limit_moments needs s_max ≥ 1");
    }
    let values = (0..=s_max)
        .map(|s| limit_moment(spec, s as f64).map(MomentValue::Float))
        .collect::<Result<_>>()?;
    Ok(MomentSequence {
        values,
        mode: Mode::Float,
        provenance: Provenance::LimitMoment { normalization: "n".into() },
    })
}

/// The same limit under N^{sΛ} normalization: μ_s / p^{sΛ}.
pub fn limit_moments_n_total(spec: &UrnSpec, s_max: u32) -> Result<MomentSequence> {
    let d = gamma_product_data(spec)?;
    let mut seq = limit_moments(spec, s_max)?;
    for (s, v) in seq.values.iter_mut().enumerate() {
        *v = MomentValue::Float(v.to_f64() / (d.p as f64).powf(s as f64 * d.lambda));
    }
    seq.provenance = Provenance::LimitMoment { normalization: "N".into() };
    Ok(seq)
}

/// Signed log of the j-th density series coefficient (without the prefactor and the power of x).
fn density_coefficient(d: &GammaProductData, j: usize) -> (f64, f64) {
    let mut sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut ln_abs = -ln_gamma_unchecked(j as f64 + 1.0);
    for r in 0..d.p {
        let (sg, la) = reciprocal_gamma_log(r as f64 / d.psi + d.b_shift - j as f64 * d.h);
        if sg == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        sign *= sg;
        ln_abs += la;
    }
    (sign, ln_abs)
}

fn density_prefactor_ln(d: &GammaProductData) -> f64 {
    let c = d.w0_over_sigma[0];
    (0..d.p).map(|r| ln_gamma_unchecked(r as f64 / d.psi + d.z)).sum::<f64>() - ln_gamma_unchecked(c)
}

/// Density series value together with a bound on its floating-point rounding error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityEvaluation {
    pub value: f64,
    pub rounding_error: f64,
    pub terms: usize,
}

const DENSITY_MAX_TERMS: usize = 10_000;

pub fn limit_density_evaluation(spec: &UrnSpec, x: f64, tol: f64) -> Result<DensityEvaluation> {
    if !(x > 0.0) || !(tol > 0.0) {
        return domain("limit_density needs x > 0 and tol > 0");
    }
    if spec.colors() != 2 {
        return Err(Error::Unsupported("limit density needs a two-color urn".into()));
    }
    let d = gamma_product_data(spec)?;
    let c = d.w0_over_sigma[0];
    let pre = density_prefactor_ln(&d);
    let lnx = x.ln();
    let mut sum = CompensatedSum::new();
    let mut max_term: f64 = 0.0;
    let mut small_run = 0;
    let mut last = 0.0;
    for j in 0..DENSITY_MAX_TERMS {
        let (sign, ln_abs) = density_coefficient(&d, j);
        if sign == 0.0 {
            continue;
        }
        let term = sign * (pre + ln_abs + (j as f64 + c - 1.0) * lnx).exp();
        sum.add(term);
        max_term = max_term.max(term.abs());
        let partial = sum.value();
        let decreasing = term.abs() <= last;
        last = term.abs();
        if decreasing && term.abs() < tol * partial.abs() {
            small_run += 1;
            if small_run == 3 {
                return Ok(DensityEvaluation {
                    value: partial,
                    rounding_error: max_term * 4.0 * f64::EPSILON * (j as f64 + 1.0).sqrt(),
                    terms: j + 1,
                });
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::NonConvergence { terms: DENSITY_MAX_TERMS, last_term: last, partial: sum.value() })
}

/// Density of the limit law of W_N/(σ n^Λ) via its power series, in MPFR where doubles cancel.
pub fn limit_density(spec: &UrnSpec, x: f64, tol: f64) -> Result<f64> {
    match limit_density_evaluation(spec, x, tol) {
        Ok(e) if e.rounding_error <= tol * e.value.abs() => Ok(e.value),
        Err(Error::Unsupported(msg)) => Err(Error::Unsupported(msg)),
        Err(e @ Error::Domain(_)) => Err(e),
        _ => Ok(PreciseDensity::new(spec)?.eval(x)?.value),
    }
}

/// Gauss-Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// ∫ x^s f(x) dx of the limit density.
///
/// The series is integrated termwise on (0, x0] and by Gauss-Legendre quadrature on panels beyond,
/// stopping once the integrand is negligible. Points where the double-precision sum cancels are
/// re-evaluated in MPFR arithmetic.
pub fn density_moment(spec: &UrnSpec, s: u32, tol: f64) -> Result<f64> {
    let d = gamma_product_data(spec)?;
    let c = d.w0_over_sigma[0];
    let pre = density_prefactor_ln(&d);
    let x0: f64 = 0.5;
    let mut head = CompensatedSum::new();
    let mut run = 0;
    for j in 0..DENSITY_MAX_TERMS {
        let (sign, ln_abs) = density_coefficient(&d, j);
        if sign == 0.0 {
            continue;
        }
        let e = j as f64 + c + s as f64;
        let term = sign * (pre + ln_abs + e * x0.ln() - e.ln()).exp();
        head.add(term);
        if term.abs() < 1e-18 * head.value().abs() {
            run += 1;
            if run == 3 {
                break;
            }
        } else {
            run = 0;
        }
    }
    let (nodes, weights) = gauss_legendre(30);
    let width = 0.25;
    let mut tail = CompensatedSum::new();
    let mut a = x0;
    let mut quiet = 0;
    let mut precise: Option<PreciseDensity> = None;
    while quiet < 3 {
        let mut panel = CompensatedSum::new();
        let mut noise = 0.0;
        for (t, w) in nodes.iter().zip(&weights) {
            let x = a + width * (t + 1.0) / 2.0;
            let ev = match limit_density_evaluation(spec, x, tol) {
                Ok(ev) if ev.rounding_error < 1e-15 => ev,
                _ => match &mut precise {
                    Some(series) => series.eval(x)?,
                    None => precise.insert(PreciseDensity::new(spec)?).eval(x)?,
                },
            };
            let weight = w * width / 2.0 * x.powi(s as i32);
            panel.add(weight * ev.value);
            noise += weight * ev.rounding_error;
        }
        let total = (head.value() + tail.value()).abs();
        if noise > 1e-9 * total {
            return Err(Error::Cancellation(format!("density series loses precision near x = {a}")));
        }
        let p = panel.value();
        tail.add(p);
        if p.abs() < 1e-16 * total {
            quiet += 1;
        } else {
            quiet = 0;
        }
        a += width;
        if a > 1e3 {
            return Err(Error::NonConvergence { terms: 0, last_term: p, partial: tail.value() });
        }
    }
    Ok(head.value() + tail.value())
}

fn multicolor_data(spec: &UrnSpec) -> Result<(RisingShape, GammaProductData)> {
    if !matches!(spec.family(), Family::MulticolorPy { .. } | Family::PolyaYoung { .. }) {
        return Err(Error::Unsupported("mixed moments need a multicolor Pólya-Young urn".into()));
    }
    Ok((rising_shape(spec)?, gamma_product_data(spec)?))
}

/// E ∏_{ℓ<t} (W_{N,ℓ}/σ)^{(s_ℓ)} for a multicolor Pólya-Young urn.
pub fn mixed_rising_moments(spec: &UrnSpec, n: u64, s: &[u32], mode: Mode) -> Result<MomentValue> {
    let (shape, _) = multicolor_data(spec)?;
    if s.len() != shape.w0.len() {
        return domain(format!("need {} exponents, got {}", shape.w0.len(), s.len()));
    }
    let total: u32 = s.iter().sum();
    match mode {
        Mode::Exact => {
            let shift = &shape.sigma * ExactRational::from_integer(total.into());
            let mut lead = ExactRational::one();
            for (w, &k) in shape.w0.iter().zip(s) {
                lead *= rising_factorial_exact(&(w / &shape.sigma), k);
            }
            let mut acc = ExactAccumulator::new(&lead);
            for t in exact_totals(spec, n)? {
                acc.mul(&((&t + &shift) / &t));
            }
            Ok(MomentValue::Exact(acc.value()))
        }
        Mode::Float => {
            let sigma = rational_to_f64(&shape.sigma);
            let mut ln = ln_shift_product(spec, n, total as f64 * sigma)?;
            for (w, &k) in shape.w0.iter().zip(s) {
                ln += rising_factorial(rational_to_f64(w) / sigma, k).ln();
            }
            Ok(MomentValue::Float(ln.exp()))
        }
    }
}

/// μ_{s_1..s_{t−1}} of the joint limit of (W_{N,ℓ}/(σ n^Λ))_ℓ.
pub fn limit_mixed_moments(spec: &UrnSpec, s: &[u32]) -> Result<f64> {
    let (_, d) = multicolor_data(spec)?;
    if s.len() != d.w0_over_sigma.len() {
        return domain(format!("need {} exponents, got {}", d.w0_over_sigma.len(), s.len()));
    }
    let total: u32 = s.iter().sum();
    let mut ln = d.ln_product(total as f64);
    for (c, &k) in d.w0_over_sigma.iter().zip(s) {
        ln += ln_gamma_unchecked(c + k as f64) - ln_gamma_unchecked(*c);
    }
    Ok(ln.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Param;
    use crate::special::log_gamma;
    use crate::urn::enumerate_histories;

    fn q(n: i64, d: i64) -> ExactRational {
        ExactRational::new(n.into(), d.into())
    }

    fn example() -> UrnSpec {
        UrnSpec::polya_young(2, 1.into(), 1.into(), 1.into(), 1.into()).unwrap()
    }

    fn exact(v: MomentValue) -> ExactRational {
        v.exact().cloned().unwrap()
    }

    #[test]
    fn rising_examples() {
        let spec = example();
        assert_eq!(exact(rising_factorial_moment(&spec, 1, 1, Mode::Exact).unwrap()), q(3, 2));
        assert_eq!(exact(rising_factorial_moment(&spec, 2, 1, Mode::Exact).unwrap()), q(2, 1));
        assert_eq!(exact(rising_factorial_moment(&spec, 7, 0, Mode::Exact).unwrap()), q(1, 1));
        let f = rising_factorial_moment(&spec, 2, 1, Mode::Float).unwrap().to_f64();
        assert!((f - 2.0).abs() < 1e-14);
        let mean6 = crate::urn::exact_pmf_dp(&spec, 6).unwrap().mean();
        assert_eq!(exact(rising_factorial_moment(&spec, 6, 1, Mode::Exact).unwrap()), mean6);
    }

    #[test]
    fn rising_matches_enumeration() {
        let spec = UrnSpec::triangular(3, Param::ratio(1, 2), 1.into(), Param::ratio(7, 3), 1.into(), 2.into()).unwrap();
        for n in 0..=7 {
            let joint = enumerate_histories(&spec, n).unwrap();
            for s in 0..=3 {
                let want = joint.expectation(|c| rising_factorial_exact(&(&c[0] * q(2, 1)), s));
                assert_eq!(exact(rising_factorial_moment(&spec, n, s, Mode::Exact).unwrap()), want);
            }
        }
    }

    #[test]
    fn raw_moment_examples() {
        let spec = example();
        let seq = raw_moments(&spec, 2, 2, Mode::Exact).unwrap();
        assert_eq!(seq.values[1], MomentValue::Exact(q(2, 1)));
        assert_eq!(seq.values[2], MomentValue::Exact(q(14, 3)));
        let zero = raw_moments(&spec, 0, 3, Mode::Exact).unwrap();
        assert_eq!(zero.values[3], MomentValue::Exact(q(1, 1)));
        let fl = raw_moments(&spec, 2, 2, Mode::Float).unwrap();
        assert!((fl.values[2].to_f64() - 14.0 / 3.0).abs() < 1e-12);
        let spec = UrnSpec::polya_young(2, Param::ratio(1, 2), 1.into(), 1.into(), 1.into()).unwrap();
        let seq = raw_moments(&spec, 9, 4, Mode::Exact).unwrap();
        let pmf = crate::urn::exact_pmf_dp(&spec, 9).unwrap();
        assert_eq!(seq.values[4], MomentValue::Exact(pmf.moment(4)));
    }

    #[test]
    fn pgf_and_lah_pmf() {
        let spec = example();
        assert!((pgf(&spec, 5, 1.0, Mode::Exact).unwrap() - 1.0).abs() < 1e-15);
        let one = pmf_via_lah(&spec, 1, Mode::Exact).unwrap();
        assert_eq!(one.probabilities, vec![q(1, 2), q(1, 2)]);
        let six = pmf_via_lah(&spec, 6, Mode::Exact).unwrap();
        assert_eq!(six, crate::urn::exact_pmf_dp(&spec, 6).unwrap());
        let v: f64 = 0.7;
        let pmf = six.to_f64();
        let direct: f64 = pmf.support.iter().zip(&pmf.probabilities).map(|(x, q)| q * v.powf(*x)).sum();
        assert!((pgf(&spec, 6, v, Mode::Float).unwrap() - direct).abs() < 1e-13);
        assert!(matches!(pgf(&spec, 31, v, Mode::Float), Err(Error::Cancellation(_))));
        let half = UrnSpec::polya_young(3, 2.into(), 1.into(), 1.into(), 1.into()).unwrap();
        for n in 0..=10 {
            assert_eq!(pmf_via_lah(&half, n, Mode::Exact).unwrap(), crate::urn::exact_pmf_dp(&half, n).unwrap());
        }
    }

    #[test]
    fn g_factor_examples() {
        let spec = example();
        assert_eq!(exact(g_factor(&spec, 2, Mode::Exact).unwrap()), q(1, 2));
        assert_eq!(exact(g_factor(&spec, 0, Mode::Exact).unwrap()), q(1, 1));
        let path = g_factor_path(&spec, 50).unwrap();
        let fpath = g_factor_path_f64(&spec, 50).unwrap();
        for (n, (a, b)) in path.iter().zip(&fpath).enumerate() {
            assert!((rational_to_f64(a) - b).abs() < 1e-14);
            assert_eq!(*a, exact(g_factor(&spec, n as u64, Mode::Exact).unwrap()));
        }
    }

    #[test]
    fn constants_examples() {
        let c = asymptotic_constants(&example()).unwrap();
        assert!((c.psi - 3.0).abs() < 1e-15);
        assert!((c.lambda - 2.0 / 3.0).abs() < 1e-15);
        let kappa = (2f64.ln() * 2.0 / 3.0 + log_gamma(4.0 / 3.0).unwrap() - log_gamma(2.0 / 3.0).unwrap()).exp();
        assert!((c.kappa - kappa).abs() < 1e-13);
        assert!((c.kappa - 1.0468).abs() < 1e-4);
        let classical = UrnSpec::polya_young(1, 3.into(), 0.into(), 1.into(), 2.into()).unwrap();
        assert_eq!(asymptotic_constants(&classical).unwrap().lambda, 1.0);
        let py = UrnSpec::polya_young(3, 2.into(), 5.into(), 1.into(), 2.into()).unwrap();
        let tri = UrnSpec::triangular(3, 2.into(), 0.into(), 5.into(), 1.into(), 2.into()).unwrap();
        let (a, b) = (asymptotic_constants(&py).unwrap(), asymptotic_constants(&tri).unwrap());
        assert!((a.psi - b.psi).abs() < 1e-14 && (a.lambda - b.lambda).abs() < 1e-14 && (a.kappa - b.kappa).abs() < 1e-13);
    }

    #[test]
    fn limit_moment_examples() {
        let spec = example();
        let mu = limit_moments(&spec, 2).unwrap().floats();
        assert_eq!(mu[0], 1.0);
        let g = |x: f64| log_gamma(x).unwrap().exp();
        assert!((mu[1] - g(2.0 / 3.0) / g(4.0 / 3.0)).abs() < 1e-13);
        assert!((mu[1] - 1.51640).abs() < 1e-5);
        assert!((mu[2] - 2.0 * g(2.0 / 3.0) / g(4.0 / 3.0) / g(5.0 / 3.0)).abs() < 1e-12);
        assert!((mu[2] - 3.3596).abs() < 1e-4);
    }

    #[test]
    fn degenerate_triangular_matches_py() {
        let py = UrnSpec::polya_young(2, 1.into(), 3.into(), 1.into(), 2.into()).unwrap();
        let tri = UrnSpec::triangular(2, 1.into(), 0.into(), 3.into(), 1.into(), 2.into()).unwrap();
        for s in 1..6 {
            let (a, b) = (limit_moment(&py, s as f64).unwrap(), limit_moment(&tri, s as f64).unwrap());
            assert!(((a - b) / a).abs() < 1e-13);
        }
    }

    #[test]
    fn mixed_moments_reduce_and_lump() {
        let spec = UrnSpec::multicolor_py(2, 1.into(), 1.into(), vec![1.into(), 1.into(), 1.into()]).unwrap();
        let joint = enumerate_histories(&spec, 2).unwrap();
        let want = joint.expectation(|c| c[0].clone() * c[1].clone());
        assert_eq!(exact(mixed_rising_moments(&spec, 2, &[1, 1], Mode::Exact).unwrap()), want);
        assert_eq!(exact(mixed_rising_moments(&spec, 5, &[0, 0], Mode::Exact).unwrap()), q(1, 1));
        // colors 2 and 3 merged as black
        let merged = UrnSpec::polya_young(2, 1.into(), 1.into(), 1.into(), 2.into()).unwrap();
        for n in 0..6 {
            for s in 0..4 {
                assert_eq!(
                    mixed_rising_moments(&spec, n, &[s, 0], Mode::Exact).unwrap(),
                    rising_factorial_moment(&merged, n, s, Mode::Exact).unwrap()
                );
            }
        }
        let mu = limit_mixed_moments(&spec, &[1, 0]).unwrap();
        assert!((mu - limit_moment(&merged, 1.0).unwrap()).abs() < 1e-13);
        assert_eq!(limit_mixed_moments(&spec, &[0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn density_leading_behaviour() {
        let spec = UrnSpec::polya_young(2, 2.into(), 1.into(), 1.into(), 1.into()).unwrap();
        let d = gamma_product_data(&spec).unwrap();
        let (x1, x2) = (1e-8, 4e-8);
        let (f1, f2) = (limit_density(&spec, x1, 1e-15).unwrap(), limit_density(&spec, x2, 1e-15).unwrap());
        let slope = (f2 / f1).ln() / (x2 / x1).ln();
        assert!((slope - (d.w0_over_sigma[0] - 1.0)).abs() < 1e-6);
        assert!(limit_density(&spec, -1.0, 1e-12).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((integral - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn accumulator_stays_reduced() {
        let mut acc = ExactAccumulator::new(&q(3, 4));
        acc.mul(&q(8, 9));
        acc.mul(&q(-3, 2));
        assert_eq!(acc.value(), q(-1, 1));
        assert_eq!(acc.invert().value(), q(-1, 1));
        acc.mul(&q(0, 1));
        assert_eq!(acc.value(), q(0, 1));
    }
}
