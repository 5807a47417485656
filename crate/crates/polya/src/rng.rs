//! Seed derivation and replicate execution.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

pub type Rng = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer applied to `master + (index + 1)·γ`, γ the 64-bit golden-ratio constant.
pub fn mix64(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn replicate_rng(master: u64, index: u64) -> Rng {
    rng_from_seed(mix64(master, index))
}

/// Runs `f(rng_i, i)` for `i in 0..replicates` with `rng_i` seeded from `mix64(master, i)`.
///
/// Results come back in replicate order whatever the number of worker threads, so any
/// sequential reduction over them is independent of `threads`.
pub fn run_replicates<T, F>(replicates: u64, master: u64, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Rng, u64) -> T + Sync + Send,
{
    let work = || {
        (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(master, i);
                f(&mut rng, i)
            })
            .collect::<Vec<T>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    }
}

/// Neumaier-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Mean, variance, standardized skewness and excess kurtosis of a sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn sample_moments(xs: &[f64]) -> SampleMoments {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    let m2 = compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / n;
    let m3 = compensated_sum(xs.iter().map(|x| (x - mean).powi(3))) / n;
    let m4 = compensated_sum(xs.iter().map(|x| (x - mean).powi(4))) / n;
    SampleMoments {
        count: xs.len(),
        mean,
        variance: m2 * n / (n - 1.0),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}
