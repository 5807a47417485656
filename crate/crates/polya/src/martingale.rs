//! The martingale M_N = g_N W_N, its increments and tail-sum experiments.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::moments::{asymptotic_constants, g_factor_path, g_factor_path_f64, rising_factorial_moment};
use crate::format::Mode;
use crate::rng::{run_replicates, sample_moments, CompensatedSum, Rng, SampleMoments};
use crate::special::{rational_to_f64, ExactRational};
use crate::urn::{total_sequence_f64, visit_histories, Schedule, TwoColorPlan, UrnSpec, UrnState};

/// M_N = g_N · W_N along a simulated trajectory.
pub fn martingale_value(spec: &UrnSpec, trajectory: &[UrnState], n: u64) -> Result<f64> {
    let Some(state) = trajectory.get(n as usize) else {
        return domain(format!("trajectory has {} states, need at least {}", trajectory.len(), n + 1));
    };
    let g = g_factor_path_f64(spec, n)?;
    Ok(g[n as usize] * state.counts[0])
}

pub fn martingale_value_exact(spec: &UrnSpec, white: &ExactRational, n: u64) -> Result<ExactRational> {
    let g = g_factor_path(spec, n)?;
    Ok(&g[n as usize] * white)
}

/// Checks E[M_{k+1} | history] = M_k exactly for every history prefix of length k < N.
/// Returns the number of prefixes checked.
pub fn verify_martingale_prefixes(spec: &UrnSpec, n: u64) -> Result<usize> {
    let g = g_factor_path(spec, n)?;
    let mut checked = 0usize;
    let mut failure = None;
    visit_histories(spec, n, |history, counts, _| {
        let k = history.len();
        if k as u64 == n || failure.is_some() {
            return;
        }
        let total: ExactRational = counts.iter().fold(ExactRational::zero(), |a, c| a + c);
        let m = spec.schedule().matrix_at(k as u64 + 1);
        let mut next = ExactRational::zero();
        for (color, c) in counts.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            next += c / &total * (&counts[0] + m.entry(color, 0));
        }
        if &g[k + 1] * next != &g[k] * &counts[0] {
            failure = Some(history.to_vec());
        }
        checked += 1;
    })?;
    match failure {
        Some(h) => Err(Error::Domain(format!("martingale identity fails after history {h:?}"))),
        None => Ok(checked),
    }
}

fn require_rising_shape(spec: &UrnSpec) -> Result<f64> {
    let sigma = spec
        .sigma()
        .ok_or_else(|| Error::Unsupported("martingale statistics need a Pólya-Young or triangular urn".into()))?
        .f64();
    if spec.colors() != 2 {
        return Err(Error::Unsupported("martingale statistics need a two-color urn".into()));
    }
    Ok(sigma)
}

/// Exact E[X_1²] as a rational, where X_1 = M_1 − M_0.
pub fn first_increment_second_moment(spec: &UrnSpec) -> Result<ExactRational> {
    second_moment_increment_exact(spec, 1)
}

/// Exact E[X_i²] = g_i² σ² (E W_{i−1}/T_{i−1} − E W_{i−1}²/T_{i−1}²).
pub fn second_moment_increment_exact(spec: &UrnSpec, i: u64) -> Result<ExactRational> {
    if i == 0 {
        return Ok(ExactRational::zero());
    }
    require_rising_shape(spec)?;
    let sigma = spec.sigma().expect("checked").exact().clone();
    let g = g_factor_path(spec, i)?;
    let r1 = rising_factorial_moment(spec, i - 1, 1, Mode::Exact)?.exact().cloned().expect("exact");
    let r2 = rising_factorial_moment(spec, i - 1, 2, Mode::Exact)?.exact().cloned().expect("exact");
    let mean = &sigma * &r1;
    let second = &sigma * &sigma * &r2 - &sigma * &mean;
    let t = crate::urn::total_balls(spec, i - 1)?;
    let gi = &g[i as usize];
    Ok(gi * gi * &sigma * &sigma * (&mean / &t - second / (&t * &t)))
}

/// Streams E[X_{i}²] for i = 1..=n_max in floating point.
fn for_each_increment_variance(spec: &UrnSpec, n_max: u64, mut f: impl FnMut(u64, f64)) -> Result<()> {
    let sigma = require_rising_shape(spec)?;
    let w0 = spec.initial_f64()[0];
    let schedule = spec.schedule();
    let adds: Vec<f64> = schedule
        .matrices()
        .iter()
        .map(|m| m.balanced_total().map(|q| rational_to_f64(&q)).ok_or_else(|| Error::Unsupported("unbalanced".into())))
        .collect::<Result<_>>()?;
    let c = w0 / sigma;
    let mut t = rational_to_f64(&spec.initial_total());
    let mut g = 1.0;
    // rising moments of W/σ of orders 1 and 2 at the current time
    let mut r1 = c;
    let mut r2 = c * (c + 1.0);
    for i in 1..=n_max {
        let g_next = g * t / (t + sigma);
        let mean = sigma * r1;
        let second = sigma * sigma * r2 - sigma * mean;
        f(i, g_next * g_next * sigma * sigma * (mean / t - second / (t * t)));
        r1 *= (t + sigma) / t;
        r2 *= (t + 2.0 * sigma) / t;
        g = g_next;
        t += adds[schedule.index_at(i)];
    }
    Ok(())
}

/// E[X_i²] for i = 0..=n_max (entry 0 is zero).
pub fn increment_variances(spec: &UrnSpec, n_max: u64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n_max as usize + 1];
    for_each_increment_variance(spec, n_max, |i, v| out[i as usize] = v)?;
    Ok(out)
}

/// Var(M_N) = Σ_{i ≤ N} E[X_i²].
pub fn martingale_variance(spec: &UrnSpec, n: u64) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for_each_increment_variance(spec, n, |_, v| acc.add(v))?;
    Ok(acc.value())
}

/// Σ_{i=from+1}^{to} E[X_i²], the variance of M_to − M_from.
pub fn window_variance(spec: &UrnSpec, from: u64, to: u64) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for_each_increment_variance(spec, to, |i, v| {
        if i > from {
            acc.add(v)
        }
    })?;
    Ok(acc.value())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentTail {
    pub n: u64,
    /// Σ_{i ≥ N} E[X_i²] summed exactly up to `cutoff` plus the power-law tail estimate.
    pub exact: f64,
    pub cutoff: u64,
    pub tail_correction: f64,
    /// N^{−Λ} (σ²/Λ) κ w0.
    pub asymptotic_printed: f64,
    /// N^{−Λ} σ κ w0, from E[X_{N+1}²] ~ σ κ Λ w0 N^{−Λ−1}.
    pub asymptotic_corrected: f64,
}

const TAIL_CUTOFF_FACTOR: u64 = 256;

/// s_N² = Σ_{i ≥ N} E[X_i²] in exact-formula and asymptotic forms.
pub fn s_squared(spec: &UrnSpec, n: u64) -> Result<SecondMomentTail> {
    if n < 1 {
        return domain("s_squared needs N ≥ 1");
    }
    let sigma = require_rising_shape(spec)?;
    let constants = asymptotic_constants(spec)?;
    let w0 = spec.initial_f64()[0];
    let period = spec.period().unwrap_or(1).max(1);
    let cutoff = (n * TAIL_CUTOFF_FACTOR).max(n + 4 * period);
    let mut acc = CompensatedSum::new();
    let mut last = CompensatedSum::new();
    for_each_increment_variance(spec, cutoff, |i, v| {
        if i >= n {
            acc.add(v);
        }
        if i > cutoff - period {
            last.add(v);
        }
    })?;
    let lambda = constants.lambda;
    // terms decay like i^{−Λ−1}: Σ_{i>K} ≈ K·(term at K)/Λ, averaged over one period
    let tail_correction = last.value() / period as f64 * cutoff as f64 / lambda;
    let nf = n as f64;
    Ok(SecondMomentTail {
        n,
        exact: acc.value() + tail_correction,
        cutoff,
        tail_correction,
        asymptotic_printed: nf.powf(-lambda) * sigma * sigma / lambda * constants.kappa * w0,
        asymptotic_corrected: nf.powf(-lambda) * sigma * constants.kappa * w0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSumExperiment {
    pub spec: serde_json::Value,
    pub n: u64,
    pub n_far: u64,
    pub replicates: u64,
    pub seed: u64,
}

impl TailSumExperiment {
    pub fn new(spec: &UrnSpec, n: u64, n_far: u64, replicates: u64, seed: u64) -> Result<Self> {
        let exp = TailSumExperiment { spec: spec.to_json(), n, n_far, replicates, seed };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return domain("tail-sum experiment needs N ≥ 1");
        }
        if self.n_far < 16 * self.n {
            return domain(format!("N_far = {} must be at least 16·N = {}", self.n_far, 16 * self.n));
        }
        if self.replicates < 2 {
            return domain("tail-sum experiment needs at least two replicates");
        }
        Ok(())
    }

    pub fn urn(&self) -> Result<UrnSpec> {
        UrnSpec::from_json(&self.spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityStats {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// n/6 (S² + K²/4); approximately χ²(2) under normality.
    pub jarque_bera: f64,
}

impl From<SampleMoments> for NormalityStats {
    fn from(m: SampleMoments) -> Self {
        let n = m.count as f64;
        NormalityStats {
            mean: m.mean,
            variance: m.variance,
            skewness: m.skewness,
            excess_kurtosis: m.excess_kurtosis,
            jarque_bera: n / 6.0 * (m.skewness * m.skewness + m.excess_kurtosis * m.excess_kurtosis / 4.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSumReport {
    pub experiment: TailSumExperiment,
    pub lambda: f64,
    pub kappa: f64,
    /// √Λ/(σ√κ).
    pub beta: f64,
    /// 1/√(σκ), the scale matching the exact increment variances.
    pub beta_corrected: f64,
    /// (N/N_far)^{Λ/2}.
    pub proxy_bias: f64,
    /// Var(M_N − M_{N_far}) from the exact increment variances.
    pub window_variance: f64,
    /// Z = N^{Λ/2} β (M_N − M_{N_far}) / √M_{N_far}.
    pub z: NormalityStats,
    /// √(w0/window_variance) (M_N − M_{N_far}) / √M_{N_far}.
    pub z_window: NormalityStats,
    /// (M_N − M_{N_far}) / √(Σ E[X_i² | past]) over the window.
    pub z_self_normalized: NormalityStats,
    pub mean_martingale_far: f64,
}

/// One replicate of (M_N, M_{N_far}, Σ_{N<i≤N_far} E[X_i² | F_{i−1}]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailSample {
    pub m_n: f64,
    pub m_far: f64,
    pub quadratic_variation: f64,
}

struct WindowPlan {
    plan: TwoColorPlan,
    sigma: f64,
    g: Vec<f64>,
    totals: Vec<f64>,
    white_increment: Vec<f64>,
    black_on_white: Vec<f64>,
    black_on_black: Vec<f64>,
    phase: u64,
}

impl WindowPlan {
    fn new(spec: &UrnSpec, n_far: u64) -> Result<Self> {
        let sigma = require_rising_shape(spec)?;
        let plan = TwoColorPlan::new(spec).ok_or_else(|| Error::Unsupported("needs a periodic non-negative urn".into()))?;
        let Schedule::Periodic { matrices, phase } = spec.schedule() else {
            return Err(Error::Unsupported("needs a periodic schedule".into()));
        };
        Ok(WindowPlan {
            plan,
            sigma,
            g: g_factor_path_f64(spec, n_far)?,
            totals: total_sequence_f64(spec, n_far)?,
            white_increment: matrices.iter().map(|m| m.entry_f64(0, 0)).collect(),
            black_on_white: matrices.iter().map(|m| m.entry_f64(0, 1)).collect(),
            black_on_black: matrices.iter().map(|m| m.entry_f64(1, 1)).collect(),
            phase: *phase,
        })
    }

    fn sample(&self, w0: f64, b0: f64, n: u64, n_far: u64, rng: &mut Rng) -> TailSample {
        let (mut w, mut b) = self.plan.run(w0, b0, 0, n, rng);
        let m_n = self.g[n as usize] * w;
        let p = self.white_increment.len();
        let mut k = ((n + self.phase) % p as u64) as usize;
        let mut qv = CompensatedSum::new();
        let s2 = self.sigma * self.sigma;
        for i in n..n_far {
            use rand::Rng as _;
            let t = self.totals[i as usize];
            let q = w / t;
            let g = self.g[i as usize + 1];
            qv.add(g * g * s2 * q * (1.0 - q));
            let u: f64 = rng.random();
            if u * (w + b) < w {
                w += self.white_increment[k];
                b += self.black_on_white[k];
            } else {
                b += self.black_on_black[k];
            }
            k += 1;
            if k == p {
                k = 0;
            }
        }
        TailSample { m_n, m_far: self.g[n_far as usize] * w, quadratic_variation: qv.value() }
    }
}

/// Replicate samples for a tail-sum experiment, in replicate order.
pub fn tail_sum_samples(exp: &TailSumExperiment, threads: Option<usize>) -> Result<Vec<TailSample>> {
    exp.validate()?;
    let spec = exp.urn()?;
    let plan = WindowPlan::new(&spec, exp.n_far)?;
    let init = spec.initial_f64();
    Ok(run_replicates(exp.replicates, exp.seed, threads, |rng, _| {
        plan.sample(init[0], init[1], exp.n, exp.n_far, rng)
    }))
}

pub fn tail_sum_clt_experiment(exp: &TailSumExperiment, threads: Option<usize>) -> Result<TailSumReport> {
    let samples = tail_sum_samples(exp, threads)?;
    tail_sum_report(exp, &samples)
}

pub fn tail_sum_report(exp: &TailSumExperiment, samples: &[TailSample]) -> Result<TailSumReport> {
    let spec = exp.urn()?;
    let sigma = require_rising_shape(&spec)?;
    let constants = asymptotic_constants(&spec)?;
    let w0 = spec.initial_f64()[0];
    let (lambda, kappa) = (constants.lambda, constants.kappa);
    let beta = lambda.sqrt() / (sigma * kappa.sqrt());
    let window_variance = window_variance(&spec, exp.n, exp.n_far)?;
    let scale = (exp.n as f64).powf(lambda / 2.0) * beta;
    let window_scale = (w0 / window_variance).sqrt();
    let mut z = Vec::with_capacity(samples.len());
    let mut z_window = Vec::with_capacity(samples.len());
    let mut z_self = Vec::with_capacity(samples.len());
    for s in samples {
        let diff = s.m_n - s.m_far;
        let eta = s.m_far.sqrt();
        z.push(scale * diff / eta);
        z_window.push(window_scale * diff / eta);
        z_self.push(diff / s.quadratic_variation.sqrt());
    }
    Ok(TailSumReport {
        experiment: exp.clone(),
        lambda,
        kappa,
        beta,
        beta_corrected: 1.0 / (sigma * kappa).sqrt(),
        proxy_bias: (exp.n as f64 / exp.n_far as f64).powf(lambda / 2.0),
        window_variance,
        z: sample_moments(&z).into(),
        z_window: sample_moments(&z_window).into(),
        z_self_normalized: sample_moments(&z_self).into(),
        mean_martingale_far: crate::rng::compensated_sum(samples.iter().map(|s| s.m_far)) / samples.len() as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilRow {
    pub n: u64,
    pub s_n: f64,
    pub log_log: f64,
    /// log log s_N^{−1} ≤ 0: the normalizer is undefined and the row is not used.
    pub skipped: bool,
    pub median_running_max: f64,
    pub mean_running_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilTable {
    pub n_far: u64,
    pub replicates: u64,
    pub seed: u64,
    pub rows: Vec<LilRow>,
    /// Per-path running maxima over the non-skipped grid points.
    pub running_max: Vec<Vec<f64>>,
}

/// Running maxima of (M_N − M_{N_far}) / (η̂ s_N √(2 log log s_N^{−1})) over an increasing grid.
pub fn lil_diagnostic(
    spec: &UrnSpec,
    grid: &[u64],
    n_far: u64,
    replicates: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<LilTable> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] < 1 {
        return domain("grid must be non-empty, strictly increasing and start at N ≥ 1");
    }
    if *grid.last().expect("non-empty") >= n_far {
        return domain("N_far must exceed every grid point");
    }
    let plan = TwoColorPlan::new(spec).ok_or_else(|| Error::Unsupported("needs a periodic non-negative urn".into()))?;
    let g = g_factor_path_f64(spec, n_far)?;
    let mut norms = Vec::with_capacity(grid.len());
    for &n in grid {
        let s_n = s_squared(spec, n)?.exact.sqrt();
        let log_log = (-s_n.ln()).ln();
        norms.push((s_n, if log_log.is_nan() { f64::NEG_INFINITY } else { log_log }));
    }
    let init = spec.initial_f64();
    let paths: Vec<Vec<f64>> = run_replicates(replicates, seed, threads, |rng, _| {
        let (mut w, mut b) = (init[0], init[1]);
        let mut at = 0;
        let mut values = Vec::with_capacity(grid.len());
        for &n in grid {
            (w, b) = plan.run(w, b, at, n, rng);
            at = n;
            values.push(g[n as usize] * w);
        }
        let (w_far, _) = plan.run(w, b, at, n_far, rng);
        let m_far = g[n_far as usize] * w_far;
        let eta = m_far.sqrt();
        let mut running = f64::NEG_INFINITY;
        values
            .iter()
            .zip(&norms)
            .filter(|(_, (_, ll))| *ll > 0.0)
            .map(|(m, (s, ll))| {
                running = running.max((m - m_far) / (eta * s * (2.0 * ll).sqrt()));
                running
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(grid.len());
    let mut column = 0;
    for (&n, &(s_n, log_log)) in grid.iter().zip(&norms) {
        let skipped = log_log <= 0.0;
        let (median, mean) = if skipped {
            (f64::NAN, f64::NAN)
        } else {
            let mut col: Vec<f64> = paths.iter().map(|p| p[column]).collect();
            column += 1;
            let mean = crate::rng::compensated_sum(col.iter().copied()) / col.len() as f64;
            col.sort_by(f64::total_cmp);
            (col[col.len() / 2], mean)
        };
        rows.push(LilRow { n, s_n, log_log, skipped, median_running_max: median, mean_running_max: mean });
    }
    Ok(LilTable { n_far, replicates, seed, rows, running_max: paths })
}

/// E[g_N W_N] as an exact rational for every N = 0..=n_max; each entry must equal w0.
pub fn expected_martingale_path(spec: &UrnSpec, n_max: u64) -> Result<Vec<ExactRational>> {
    let sigma = spec
        .sigma()
        .ok_or_else(|| Error::Unsupported("needs a Pólya-Young or triangular urn".into()))?
        .exact()
        .clone();
    let g = g_factor_path(spec, n_max)?;
    let rising = crate::moments::rising_factorial_moment_path(spec, n_max, 1)?;
    Ok(g.iter().zip(&rising).map(|(g, r)| g * r * &sigma).collect())
}

/// Checks E[g_N W_N] = w0 for N = 0..=n_max; returns the first failing N if any.
pub fn first_martingale_mean_failure(spec: &UrnSpec, n_max: u64) -> Result<Option<u64>> {
    let w0 = spec.initial()[0].exact().clone();
    let path = expected_martingale_path(spec, n_max)?;
    Ok(path.iter().position(|v| *v != w0).map(|i| i as u64))
}
