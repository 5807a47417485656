//! Limit laws described by moment sequences: Beta, generalized Gamma, Dirichlet,
//! three-parameter Mittag-Leffler and the scaled local time of a noise-reinforced Bessel process,
//! closed under tilting, products, scaling and powers.

use rand::Rng as _;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::format::Mode;
use crate::moments::{limit_moment, MomentSequence, MomentValue, Provenance};
use crate::rng::Rng;
use crate::special::ln_gamma_unchecked;
use crate::urn::{Family, UrnSpec};

const INTEGER_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawDescriptor {
    Beta { a: f64, b: f64 },
    GenGamma { a: f64, b: f64 },
    /// Vector law; scalar operations act on the first component.
    Dirichlet { alphas: Vec<f64> },
    Ml3 { alpha: f64, beta: f64, gamma: f64 },
    BesselLocalTime { alpha: f64, beta: f64 },
    Tilted { base: Box<LawDescriptor>, c: f64 },
    Product { factors: Vec<LawDescriptor> },
    Scaled { base: Box<LawDescriptor>, factor: f64 },
    Power { base: Box<LawDescriptor>, exponent: f64 },
}

fn near_integer(x: f64) -> Option<u64> {
    let r = x.round();
    ((x - r).abs() < INTEGER_TOL * x.abs().max(1.0) && r >= 0.0).then_some(r as u64)
}

impl LawDescriptor {
    pub fn beta(a: f64, b: f64) -> Result<Self> {
        let law = LawDescriptor::Beta { a, b };
        law.validate()?;
        Ok(law)
    }

    pub fn gen_gamma(a: f64, b: f64) -> Result<Self> {
        let law = LawDescriptor::GenGamma { a, b };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LawDescriptor::Beta { a, b } | LawDescriptor::GenGamma { a, b } => {
                if !(*a > 0.0 && *b > 0.0) {
                    return domain(format!("{self:?}: parameters must be positive"));
                }
            }
            LawDescriptor::Dirichlet { alphas } => {
                if alphas.len() < 2 || alphas.iter().any(|a| !(*a > 0.0)) {
                    return domain("dirichlet needs at least two positive parameters");
                }
            }
            LawDescriptor::Ml3 { alpha, beta, gamma } => {
                if !(*alpha > 0.0 && *alpha < 1.0 && *beta > 0.0 && *gamma >= 0.0) {
                    return domain("ml3 needs α ∈ (0,1), β > 0, γ ≥ 0");
                }
            }
            LawDescriptor::BesselLocalTime { alpha, beta } => {
                if !(*alpha > 0.0 && *alpha < 1.0 && *beta > 0.0) {
                    return domain("bessel_local_time needs α ∈ (0,1), β > 0");
                }
            }
            LawDescriptor::Tilted { base, .. } | LawDescriptor::Scaled { base, .. } | LawDescriptor::Power { base, .. } => {
                base.validate()?
            }
            LawDescriptor::Product { factors } => {
                for f in factors {
                    f.validate()?;
                }
            }
        }
        if let LawDescriptor::Scaled { factor, .. } = self {
            if !(*factor > 0.0) {
                return domain("scale factor must be positive");
            }
        }
        Ok(())
    }

    /// ln E[X^s] for real s.
    pub fn ln_moment(&self, s: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        let missing = |what: &str| Error::Domain(format!("moment of order {s} does not exist for {what}"));
        match self {
            LawDescriptor::Beta { a, b } => {
                if a + s <= 0.0 {
                    return Err(missing("beta"));
                }
                Ok(ln_gamma_unchecked(a + s) + ln_gamma_unchecked(a + b) - ln_gamma_unchecked(*a) - ln_gamma_unchecked(a + b + s))
            }
            LawDescriptor::GenGamma { a, b } => {
                if a + s <= 0.0 {
                    return Err(missing("gen_gamma"));
                }
                Ok(ln_gamma_unchecked((a + s) / b) - ln_gamma_unchecked(a / b))
            }
            LawDescriptor::Dirichlet { alphas } => {
                let total: f64 = alphas.iter().sum();
                LawDescriptor::Beta { a: alphas[0], b: total - alphas[0] }.ln_moment(s)
            }
            LawDescriptor::Ml3 { alpha, beta, gamma } => {
                if s + beta / alpha <= 0.0 || alpha * s + beta + gamma <= 0.0 {
                    return Err(missing("ml3"));
                }
                Ok(ln_gamma_unchecked(s + beta / alpha) + ln_gamma_unchecked(beta + gamma)
                    - ln_gamma_unchecked(alpha * s + beta + gamma)
                    - ln_gamma_unchecked(beta / alpha))
            }
            LawDescriptor::BesselLocalTime { alpha, beta } => bessel_ln_moment(*alpha, *beta, s),
            LawDescriptor::Tilted { base, c } => Ok(base.ln_moment(s + c)? - base.ln_moment(*c)?),
            LawDescriptor::Product { factors } => factors.iter().map(|f| f.ln_moment(s)).sum(),
            LawDescriptor::Scaled { base, factor } => Ok(s * factor.ln() + base.ln_moment(s)?),
            LawDescriptor::Power { base, exponent } => base.ln_moment(s * exponent),
        }
    }

    pub fn moment(&self, s: f64) -> Result<f64> {
        self.ln_moment(s).map(f64::exp)
    }

    pub fn moments(&self, s_max: u32) -> Result<MomentSequence> {
        if s_max < 1 {
            return domain("moments needs s_max ≥ 1");
        }
        self.validate()?;
        let values = (0..=s_max).map(|s| self.moment(s as f64).map(MomentValue::Float)).collect::<Result<_>>()?;
        Ok(MomentSequence {
            values,
            mode: Mode::Float,
            provenance: Provenance::LawComponent { law: self.name() },
        })
    }

    pub fn name(&self) -> String {
        match self {
            LawDescriptor::Beta { .. } => "beta",
            LawDescriptor::GenGamma { .. } => "gen_gamma",
            LawDescriptor::Dirichlet { .. } => "dirichlet",
            LawDescriptor::Ml3 { .. } => "ml3",
            LawDescriptor::BesselLocalTime { .. } => "bessel_local_time",
            LawDescriptor::Tilted { .. } => "tilted",
            LawDescriptor::Product { .. } => "product",
            LawDescriptor::Scaled { .. } => "scaled",
            LawDescriptor::Power { .. } => "power",
        }
        .into()
    }

    /// Rewrite into an equivalent descriptor with tilts pushed down to samplable leaves.
    fn normalize_tilts(&self) -> Result<LawDescriptor> {
        let unsupported = || Error::Unsupported(format!("{} cannot be sampled", self.name()));
        Ok(match self {
            LawDescriptor::Tilted { base, c } => match base.normalize_tilts()? {
                LawDescriptor::Beta { a, b } => LawDescriptor::Beta { a: a + c, b },
                LawDescriptor::GenGamma { a, b } => LawDescriptor::GenGamma { a: a + c, b },
                LawDescriptor::Scaled { base, factor } => {
                    LawDescriptor::Scaled { base: Box::new(tilt(&base, *c).normalize_tilts()?), factor }
                }
                LawDescriptor::Power { base, exponent } => {
                    LawDescriptor::Power { base: Box::new(tilt(&base, c * exponent).normalize_tilts()?), exponent }
                }
                LawDescriptor::Product { factors } => LawDescriptor::Product {
                    factors: factors.iter().map(|f| tilt(f, *c).normalize_tilts()).collect::<Result<_>>()?,
                },
                _ => return Err(unsupported()),
            },
            LawDescriptor::Scaled { base, factor } => {
                LawDescriptor::Scaled { base: Box::new(base.normalize_tilts()?), factor: *factor }
            }
            LawDescriptor::Power { base, exponent } => {
                LawDescriptor::Power { base: Box::new(base.normalize_tilts()?), exponent: *exponent }
            }
            LawDescriptor::Product { factors } => {
                LawDescriptor::Product { factors: factors.iter().map(|f| f.normalize_tilts()).collect::<Result<_>>()? }
            }
            LawDescriptor::Ml3 { .. } | LawDescriptor::BesselLocalTime { .. } => return Err(unsupported()),
            other => other.clone(),
        })
    }

    /// One draw of a scalar law (the first component for Dirichlet).
    pub fn sample(&self, rng: &mut Rng) -> Result<f64> {
        self.validate()?;
        self.normalize_tilts()?.sample_normalized(rng)
    }

    fn sample_normalized(&self, rng: &mut Rng) -> Result<f64> {
        match self {
            LawDescriptor::Beta { a, b } => {
                let dist = BetaDist::new(*a, *b).map_err(|e| Error::Domain(e.to_string()))?;
                Ok(dist.sample(rng))
            }
            LawDescriptor::GenGamma { a, b } => {
                let dist = GammaDist::new(a / b, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
                Ok(dist.sample(rng).powf(1.0 / b))
            }
            LawDescriptor::Dirichlet { .. } => Ok(sample_dirichlet(self, rng)?[0]),
            LawDescriptor::Scaled { base, factor } => Ok(factor * base.sample_normalized(rng)?),
            LawDescriptor::Power { base, exponent } => Ok(base.sample_normalized(rng)?.powf(*exponent)),
            LawDescriptor::Product { factors } => {
                let mut x = 1.0;
                for f in factors {
                    x *= f.sample_normalized(rng)?;
                }
                Ok(x)
            }
            _ => Err(Error::Unsupported(format!("{} cannot be sampled", self.name()))),
        }
    }

    pub fn samplable(&self) -> bool {
        self.normalize_tilts().is_ok()
    }
}

/// Draw a full Dirichlet vector via normalized Gamma variables.
pub fn sample_dirichlet(law: &LawDescriptor, rng: &mut Rng) -> Result<Vec<f64>> {
    let LawDescriptor::Dirichlet { alphas } = law else {
        return Err(Error::Unsupported("not a dirichlet law".into()));
    };
    law.validate()?;
    let mut xs = Vec::with_capacity(alphas.len());
    for a in alphas {
        let x: f64 = GammaDist::new(*a, 1.0).map_err(|e| Error::Domain(e.to_string()))?.sample(rng);
        xs.push(x);
    }
    let total: f64 = xs.iter().sum();
    if total == 0.0 {
        let k = rng.random_range(0..xs.len());
        xs.iter_mut().enumerate().for_each(|(i, x)| *x = if i == k { 1.0 } else { 0.0 });
        return Ok(xs);
    }
    Ok(xs.into_iter().map(|x| x / total).collect())
}

/// E ∏ X_i^{s_i} for a Dirichlet vector.
pub fn dirichlet_mixed_moment(alphas: &[f64], s: &[f64]) -> Result<f64> {
    if alphas.len() != s.len() {
        return domain("exponent vector length must match the Dirichlet dimension");
    }
    let a: f64 = alphas.iter().sum();
    let total: f64 = s.iter().sum();
    let mut ln = ln_gamma_unchecked(a) - ln_gamma_unchecked(a + total);
    for (ai, si) in alphas.iter().zip(s) {
        ln += ln_gamma_unchecked(ai + si) - ln_gamma_unchecked(*ai);
    }
    Ok(ln.exp())
}

fn bessel_ln_moment(alpha: f64, beta: f64, s: f64) -> Result<f64> {
    if s < 0.0 {
        return domain("local-time moments are used for s ≥ 0");
    }
    let first = (alpha / beta).ln() - ln_gamma_unchecked(1.0 + alpha);
    if let Some(k) = near_integer(s) {
        let mut ln = first + ln_gamma_unchecked(k as f64);
        for j in 1..k {
            ln += ln_gamma_unchecked(j as f64 * beta) - ln_gamma_unchecked(alpha + j as f64 * beta);
        }
        return Ok(ln);
    }
    let m = near_integer(alpha / beta)
        .filter(|m| *m >= 1)
        .ok_or_else(|| Error::Unsupported("real-order local-time moments need α/β ∈ ℕ".into()))?;
    Ok(first + tilted_local_time_ln_moment(alpha, m, s - 1.0))
}

/// ln E[T^q] = ln Γ(q+1) + Σ_{j=1}^m [ln Γ(jα/m) − ln Γ((q+j)α/m)] for T = tilt_1(L), real q > −1.
fn tilted_local_time_ln_moment(alpha: f64, m: u64, q: f64) -> f64 {
    let h = alpha / m as f64;
    let mut ln = ln_gamma_unchecked(q + 1.0);
    for j in 1..=m {
        ln += ln_gamma_unchecked(j as f64 * h) - ln_gamma_unchecked((q + j as f64) * h);
    }
    ln
}

pub fn tilt(law: &LawDescriptor, c: f64) -> LawDescriptor {
    LawDescriptor::Tilted { base: Box::new(law.clone()), c }
}

pub fn product(factors: Vec<LawDescriptor>) -> LawDescriptor {
    LawDescriptor::Product { factors }
}

pub fn scaled(law: LawDescriptor, factor: f64) -> LawDescriptor {
    LawDescriptor::Scaled { base: Box::new(law), factor }
}

pub fn power(law: LawDescriptor, exponent: f64) -> LawDescriptor {
    LawDescriptor::Power { base: Box::new(law), exponent }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselParams {
    pub d: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Dimension, reinforcement and (α, β) of the local time attached to a Pólya-Young urn.
pub fn bessel_params_from_urn(spec: &UrnSpec) -> Result<BesselParams> {
    let (p, sigma, ell) = match spec.family() {
        Family::PolyaYoung { p, sigma, ell } | Family::MulticolorPy { p, sigma, ell, .. } => {
            (*p as f64, sigma.f64(), ell.f64())
        }
        _ => return Err(Error::Unsupported("Bessel parameters need a Pólya-Young urn".into())),
    };
    if ell <= 0.0 {
        return domain("ℓ = 0 is degenerate: no Bessel representation");
    }
    let d = 2.0 * ell / (p * sigma + ell);
    let r = -(p - 1.0) / 2.0;
    let alpha = 1.0 - d / 2.0;
    Ok(BesselParams { d, r, alpha, beta: alpha / (1.0 - 2.0 * r) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionCase {
    /// Beta (or Mittag-Leffler) times generalized Gamma factors; needs ψ ∈ ℕ.
    GammaProduct,
    /// Beta (or Mittag-Leffler) times a tilted local time.
    LocalTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub s: u32,
    pub target: f64,
    pub unit_scale: f64,
    pub fitted: f64,
    pub relative_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub family: String,
    pub case: DecompositionCase,
    pub law: LawDescriptor,
    /// Scale fitted from s = 1 (fixed to 1 for the local-time case).
    pub fitted_scale: f64,
    /// Scale predicted by the Gamma multiplication formula.
    pub predicted_scale: f64,
    /// The constant ψ^ψ printed in front of the product.
    pub printed_scale: f64,
    /// Limit moments are those of lim W_N/(σ n^Λ).
    pub normalization: String,
    pub rows: Vec<DecompositionRow>,
    pub max_relative_residual: f64,
}

pub const DECOMPOSITION_TOL: f64 = 1e-9;

struct UrnLawData {
    family: &'static str,
    p: u64,
    psi: f64,
    sigma: f64,
    sigma1: f64,
    w0: f64,
    b0: f64,
}

fn urn_law_data(spec: &UrnSpec) -> Result<UrnLawData> {
    if spec.colors() != 2 {
        return Err(Error::Unsupported("decompositions need a two-color urn".into()));
    }
    let init = spec.initial_f64();
    match spec.family() {
        Family::PolyaYoung { p, sigma, ell } => Ok(UrnLawData {
            family: "polya_young",
            p: *p,
            psi: *p as f64 + ell.f64() / sigma.f64(),
            sigma: sigma.f64(),
            sigma1: sigma.f64(),
            w0: init[0],
            b0: init[1],
        }),
        Family::Triangular { p, sigma, ell1, ell2 } => {
            let s1 = sigma.f64() + ell1.f64();
            Ok(UrnLawData {
                family: "triangular",
                p: *p,
                psi: *p as f64 + (ell2.f64() - ell1.f64()) / s1,
                sigma: sigma.f64(),
                sigma1: s1,
                w0: init[0],
                b0: init[1],
            })
        }
        _ => Err(Error::Unsupported("decompositions need a Pólya-Young or triangular urn".into())),
    }
}

/// Unit-scale right-hand side of the decomposition together with its predicted scale.
pub fn decomposition_law(spec: &UrnSpec, case: DecompositionCase) -> Result<(LawDescriptor, f64)> {
    let d = urn_law_data(spec)?;
    let u = (d.w0 + d.b0) / d.sigma;
    let head = if d.family == "polya_young" {
        LawDescriptor::beta(d.w0 / d.sigma, d.b0 / d.sigma)?
    } else {
        let alpha = d.sigma / d.sigma1;
        if alpha >= 1.0 {
            return Err(Error::Unsupported("Mittag-Leffler factor needs ℓ1 > 0".into()));
        }
        LawDescriptor::Ml3 { alpha, beta: d.w0 / d.sigma1, gamma: d.b0 / d.sigma1 }
    };
    match case {
        DecompositionCase::GammaProduct => {
            let psi = near_integer(d.psi).ok_or_else(|| {
                Error::Unsupported(format!("Gamma-product decomposition needs ψ ∈ ℕ, got ψ = {}", d.psi))
            })?;
            let mut factors = vec![head];
            for r in d.p..psi {
                let a = (r as f64 * d.sigma1 + d.w0 + d.b0) / d.sigma;
                factors.push(LawDescriptor::gen_gamma(a, d.sigma1 * d.psi / d.sigma)?);
            }
            Ok((product(factors), d.psi.powf(d.sigma / d.sigma1)))
        }
        DecompositionCase::LocalTime => {
            let local_time = LawDescriptor::BesselLocalTime { alpha: d.p as f64 / d.psi, beta: 1.0 / d.psi };
            if d.p as f64 / d.psi >= 1.0 {
                return Err(Error::Unsupported("local-time factor needs ψ > p".into()));
            }
            let t = tilt(&local_time, 1.0);
            let tail = if d.family == "polya_young" {
                tilt(&t, u - 1.0)
            } else {
                tilt(&power(t, d.sigma / d.sigma1), u - d.sigma1 / d.sigma)
            };
            Ok((product(vec![head, tail]), 1.0))
        }
    }
}

/// Compare the decomposition's moments with the urn's limit moments for s = 1..=s_max.
pub fn verify_decomposition(spec: &UrnSpec, case: DecompositionCase, s_max: u32) -> Result<DecompositionReport> {
    if s_max < 3 {
        return domain("verify_decomposition needs s_max ≥ 3");
    }
    let d = urn_law_data(spec)?;
    let (law, predicted) = decomposition_law(spec, case)?;
    let target1 = limit_moment(spec, 1.0)?;
    let fitted_scale = match case {
        DecompositionCase::GammaProduct => target1 / law.moment(1.0)?,
        DecompositionCase::LocalTime => 1.0,
    };
    let mut rows = Vec::with_capacity(s_max as usize);
    let mut worst: f64 = 0.0;
    for s in 1..=s_max {
        let target = limit_moment(spec, s as f64)?;
        let unit_scale = law.moment(s as f64)?;
        let fitted = fitted_scale.powi(s as i32) * unit_scale;
        let relative_residual = (fitted - target).abs() / target.abs();
        worst = worst.max(relative_residual);
        rows.push(DecompositionRow { s, target, unit_scale, fitted, relative_residual });
    }
    let report = DecompositionReport {
        family: d.family.into(),
        case,
        law,
        fitted_scale,
        predicted_scale: predicted,
        printed_scale: d.psi.powf(d.psi),
        normalization: "n".into(),
        rows,
        max_relative_residual: worst,
    };
    if worst > DECOMPOSITION_TOL {
        let row = report.rows.iter().find(|r| r.relative_residual == worst).expect("row");
        return Err(Error::DecompositionMismatch { s: row.s as usize, expected: row.target, got: row.fitted });
    }
    Ok(report)
}

/// Every decomposition that applies to the spec.
pub fn verify_decompositions(spec: &UrnSpec, s_max: u32) -> Result<Vec<DecompositionReport>> {
    let mut out = Vec::new();
    for case in [DecompositionCase::GammaProduct, DecompositionCase::LocalTime] {
        match verify_decomposition(spec, case, s_max) {
            Ok(r) => out.push(r),
            Err(Error::Unsupported(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::Unsupported("no decomposition applies to this spec".into()));
    }
    Ok(out)
}
