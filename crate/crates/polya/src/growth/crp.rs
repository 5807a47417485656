//! Chinese restaurant process with competing restaurants and an optional cocktail bar.

use num_traits::{ToPrimitive, Zero};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{domain, Result};
use crate::param::Param;
use crate::rng::{mix64, run_replicates, Rng};
use crate::special::ExactRational;
use crate::urn::Pmf;

use super::tree::{Forest, ForestConfig, OffsetMode, TreeFamily};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrpParams {
    pub a: Param,
    pub theta: Param,
    pub p: u64,
    /// Bar attraction θ2; `None` means no bar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_bar: Option<Param>,
}

impl CrpParams {
    pub fn new(a: Param, theta: Param, p: u64) -> Self {
        CrpParams { a, theta, p, theta_bar: None }
    }

    pub fn with_bar(mut self, theta_bar: Param) -> Self {
        self.theta_bar = Some(theta_bar);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let zero = ExactRational::zero();
        let one = ExactRational::from_integer(1.into());
        if !(self.a.exact() > &zero && self.a.exact() < &one) {
            return domain("discount a must lie in (0,1)");
        }
        if !self.theta.is_positive() {
            return domain("strength θ must be positive");
        }
        if self.p < 1 {
            return domain("period p must be at least 1");
        }
        if let Some(t2) = &self.theta_bar {
            if !t2.is_positive() {
                return domain("bar strength θ2 must be positive");
            }
        }
        Ok(())
    }

    /// GPORT forest with α = 1/a − 1, ℓ = θ/a and bar β = θ2/a, root labeled zero.
    pub fn forest_config(&self) -> Result<ForestConfig> {
        self.validate()?;
        let a = self.a.exact();
        let alpha = Param(a.recip() - ExactRational::from_integer(1.into()));
        let ell = Param(self.theta.exact() / a);
        let config = ForestConfig::new(TreeFamily::Gport { alpha }, self.p, ell, OffsetMode::Crp);
        Ok(match &self.theta_bar {
            Some(t2) => config.with_bar(Param(t2.exact() / a)),
            None => config,
        })
    }

    /// c_N = N + (n+1)θ (+ θ2).
    pub fn normalizer(&self, customers: u64) -> ExactRational {
        let n = customers / self.p;
        let base = ExactRational::from_integer(customers.into())
            + ExactRational::from_integer((n + 1).into()) * self.theta.exact();
        match &self.theta_bar {
            Some(t2) => base + t2.exact(),
            None => base,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionState {
    /// Table sizes per restaurant, the original restaurant first.
    pub restaurants: Vec<Vec<u64>>,
    pub bar: Option<u64>,
    pub customers: u64,
    pub params: CrpParams,
    /// (restaurant, table) of customer 1.
    #[serde(default)]
    pub first_table: Option<(usize, usize)>,
}

/// Where the next customer goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Seat {
    Table { restaurant: usize, table: usize },
    NewTable { restaurant: usize },
    Bar,
}

impl PartitionState {
    pub fn new(params: CrpParams) -> Result<Self> {
        params.validate()?;
        let bar = params.theta_bar.as_ref().map(|_| 0);
        Ok(PartitionState { restaurants: vec![Vec::new()], bar, customers: 0, params, first_table: None })
    }

    /// Restaurants opened beyond the first.
    pub fn opened(&self) -> u64 {
        self.restaurants.len() as u64 - 1
    }

    pub fn tables(&self) -> usize {
        self.restaurants.iter().map(Vec::len).sum()
    }

    /// Size of the table holding customer 1; 0 if that customer sits at the bar.
    pub fn first_table_size(&self) -> u64 {
        self.first_table.map_or(0, |(r, t)| self.restaurants[r][t])
    }

    /// Every seat option with its probability, in exact arithmetic.
    pub fn seat_probabilities(&self) -> Vec<(Seat, ExactRational)> {
        let a = self.params.a.exact();
        let c = self.params.normalizer(self.customers);
        let mut out = Vec::new();
        for (r, tables) in self.restaurants.iter().enumerate() {
            for (t, &size) in tables.iter().enumerate() {
                let w = ExactRational::from_integer(size.into()) - a;
                out.push((Seat::Table { restaurant: r, table: t }, w / &c));
            }
            let m = ExactRational::from_integer((tables.len() as u64).into());
            out.push((Seat::NewTable { restaurant: r }, (m * a + self.params.theta.exact()) / &c));
        }
        if let (Some(b), Some(t2)) = (self.bar, &self.params.theta_bar) {
            out.push((Seat::Bar, (ExactRational::from_integer(b.into()) + t2.exact()) / &c));
        }
        out
    }

    pub fn seat(&mut self, seat: Seat) {
        match seat {
            Seat::Table { restaurant, table } => self.restaurants[restaurant][table] += 1,
            Seat::NewTable { restaurant } => {
                self.restaurants[restaurant].push(1);
                if self.customers == 0 {
                    self.first_table = Some((restaurant, self.restaurants[restaurant].len() - 1));
                }
            }
            Seat::Bar => *self.bar.as_mut().expect("bar present") += 1,
        }
        self.customers += 1;
        if self.customers.is_multiple_of(self.params.p) {
            self.restaurants.push(Vec::new());
        }
    }
}

/// Place one customer.
pub fn crp_step(mut state: PartitionState, rng: &mut Rng) -> PartitionState {
    let a = state.params.a.f64();
    let theta = state.params.theta.f64();
    let mut options: Vec<(Seat, f64)> = Vec::new();
    for (r, tables) in state.restaurants.iter().enumerate() {
        for (t, &size) in tables.iter().enumerate() {
            options.push((Seat::Table { restaurant: r, table: t }, size as f64 - a));
        }
        options.push((Seat::NewTable { restaurant: r }, tables.len() as f64 * a + theta));
    }
    if let (Some(b), Some(t2)) = (state.bar, &state.params.theta_bar) {
        options.push((Seat::Bar, b as f64 + t2.f64()));
    }
    let total: f64 = options.iter().map(|o| o.1).sum();
    debug_assert!({
        let c = state.params.normalizer(state.customers).to_f64().unwrap_or(f64::NAN);
        (total - c).abs() <= 1e-9 * c
    });
    let target = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let mut chosen = options.last().expect("at least one option").0;
    for (seat, w) in &options {
        cum += w;
        if target < cum {
            chosen = *seat;
            break;
        }
    }
    state.seat(chosen);
    state
}

/// State after `n` customers.
pub fn simulate_crp(params: CrpParams, n: u64, rng: &mut Rng) -> Result<PartitionState> {
    let mut state = PartitionState::new(params)?;
    for _ in 0..n {
        state = crp_step(state, rng);
    }
    Ok(state)
}

/// Exact law of the total number of tables after `n` customers.
pub fn table_count_pmf(params: &CrpParams, n: u64) -> Result<Pmf<ExactRational>> {
    params.validate()?;
    let a = params.a.exact();
    let theta = params.theta.exact();
    let mut probs = vec![ExactRational::from_integer(1.into())];
    for customers in 0..n {
        let c = params.normalizer(customers);
        let restaurants = ExactRational::from_integer((customers / params.p + 1).into());
        let mut next = vec![ExactRational::zero(); probs.len() + 1];
        for (m, q) in probs.iter().enumerate() {
            if q.is_zero() {
                continue;
            }
            let open = (ExactRational::from_integer((m as u64).into()) * a + &restaurants * theta) / &c;
            next[m + 1] += q * &open;
            next[m] += q * (ExactRational::from_integer(1.into()) - open);
        }
        probs = next;
    }
    let support = (0..probs.len()).map(|m| ExactRational::from_integer((m as u64).into())).collect();
    Ok(Pmf { support, probabilities: probs })
}

/// Branch-join probabilities read off the forest: (|t|(1+α) − 1)/C_N per root branch.
pub fn tree_branch_probabilities(forest: &Forest) -> Result<Vec<Vec<ExactRational>>> {
    let TreeFamily::Gport { alpha } = &forest.config().family else {
        return domain("branch probabilities need a GPORT forest");
    };
    let c = forest.config().connectivity_at(forest.size());
    let one = ExactRational::from_integer(1.into());
    let sigma = alpha.exact() + &one;
    Ok(forest
        .root_branches()
        .iter()
        .map(|sizes| {
            sizes.iter().map(|&s| (ExactRational::from_integer(s.into()) * &sigma - &one) / &c).collect()
        })
        .collect())
}

/// Total variation distance between two empirical samples.
pub fn tv_between_samples<K: Ord + Copy>(x: &[K], y: &[K]) -> f64 {
    let mut hist: BTreeMap<K, (f64, f64)> = BTreeMap::new();
    for &k in x {
        hist.entry(k).or_default().0 += 1.0 / x.len() as f64;
    }
    for &k in y {
        hist.entry(k).or_default().1 += 1.0 / y.len() as f64;
    }
    hist.values().map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}

#[derive(Clone, Debug, Serialize)]
pub struct CrpEquivalenceReport {
    pub params: CrpParams,
    pub forest: ForestConfig,
    pub n: u64,
    pub replicates: u64,
    pub seed: u64,
    /// Table counts, restaurant process against forest.
    pub tv_tables: f64,
    pub tv_first_table: f64,
    pub tv_joint: f64,
    pub tv_crp_vs_exact: f64,
    pub tv_tree_vs_exact: f64,
    pub crp_mean_tables: f64,
    pub tree_mean_tables: f64,
    pub exact_mean_tables: f64,
}

fn tree_statistics(forest: &Forest) -> (u64, u64) {
    let tables: usize = forest.root_branches().iter().map(Vec::len).sum();
    let one = forest.ordinary_node(1).expect("customer 1");
    let sizes = forest.subtree_sizes();
    let branch = forest.branch_of(one).expect("non-root node");
    let root = forest.nodes()[branch].parent.expect("branch has a root");
    let first = if Some(root) == forest.bar_root() { 0 } else { sizes[branch] };
    (tables as u64, first)
}

/// Restaurant process and the mapped GPORT forest, compared on table statistics.
pub fn verify_crp_tree_equivalence(
    params: &CrpParams,
    n: u64,
    replicates: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<CrpEquivalenceReport> {
    if n < 1 || replicates == 0 {
        return domain("need N ≥ 1 and a positive replicate count");
    }
    let config = params.forest_config()?;
    let crp: Vec<(u64, u64)> = run_replicates(replicates, seed, threads, |rng, _| {
        simulate_crp(params.clone(), n, rng).map(|s| (s.tables() as u64, s.first_table_size()))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let tree: Vec<(u64, u64)> = run_replicates(replicates, mix64(seed, 0x7EE5), threads, |rng, _| {
        Forest::grown(config.clone(), n, rng).map(|f| tree_statistics(&f))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let exact = table_count_pmf(params, n)?.to_f64();
    let crp_tables: Vec<u64> = crp.iter().map(|s| s.0).collect();
    let tree_tables: Vec<u64> = tree.iter().map(|s| s.0).collect();
    let crp_first: Vec<u64> = crp.iter().map(|s| s.1).collect();
    let tree_first: Vec<u64> = tree.iter().map(|s| s.1).collect();
    let as_f64 = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len() as f64;
    Ok(CrpEquivalenceReport {
        params: params.clone(),
        forest: config,
        n,
        replicates,
        seed,
        tv_tables: tv_between_samples(&crp_tables, &tree_tables),
        tv_first_table: tv_between_samples(&crp_first, &tree_first),
        tv_joint: tv_between_samples(&crp, &tree),
        tv_crp_vs_exact: exact.tv_distance_to_counts(&as_f64(&crp_tables)),
        tv_tree_vs_exact: exact.tv_distance_to_counts(&as_f64(&tree_tables)),
        crp_mean_tables: mean(&crp_tables),
        tree_mean_tables: mean(&tree_tables),
        exact_mean_tables: exact.mean(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn half() -> CrpParams {
        CrpParams::new(Param::ratio(1, 2), Param::ratio(1, 2), 4)
    }

    #[test]
    fn first_customer_opens_a_table() {
        let state = PartitionState::new(half()).unwrap();
        let probs = state.seat_probabilities();
        assert_eq!(probs, vec![(Seat::NewTable { restaurant: 0 }, ExactRational::from_integer(1.into()))]);
        let state = crp_step(state, &mut rng_from_seed(1));
        assert_eq!(state.restaurants, vec![vec![1]]);
        assert_eq!(state.first_table_size(), 1);
    }

    #[test]
    fn conservation_and_normalization() {
        let params = CrpParams::new(Param::ratio(1, 3), 1.into(), 3).with_bar(Param::ratio(1, 2));
        let mut rng = rng_from_seed(8);
        let mut state = PartitionState::new(params).unwrap();
        for _ in 0..200 {
            state = crp_step(state, &mut rng);
            let seated: u64 = state.restaurants.iter().flatten().sum::<u64>() + state.bar.unwrap_or(0);
            assert_eq!(seated, state.customers);
            assert_eq!(state.opened(), state.customers / 3);
            let total = state.seat_probabilities().into_iter().fold(ExactRational::zero(), |a, (_, q)| a + q);
            assert_eq!(total, ExactRational::from_integer(1.into()));
        }
    }

    #[test]
    fn join_probabilities_match_tree_weights() {
        for params in [half(), CrpParams::new(Param::ratio(1, 3), 1.into(), 2).with_bar(2.into())] {
            let config = params.forest_config().unwrap();
            let mut rng = rng_from_seed(99);
            let mut forest = Forest::new(config).unwrap();
            for _ in 0..40 {
                forest.grow(&mut rng).unwrap();
            }
            let tree = tree_branch_probabilities(&forest).unwrap();
            let mut state = PartitionState::new(params.clone()).unwrap();
            state.restaurants = forest.root_branches();
            state.bar = forest.bar_size();
            state.customers = forest.size();
            let crp = state.seat_probabilities();
            let a = params.a.exact();
            let c_crp = params.normalizer(forest.size());
            for (r, row) in tree.iter().enumerate() {
                for (t, q) in row.iter().enumerate() {
                    let size = ExactRational::from_integer(state.restaurants[r][t].into());
                    assert_eq!(*q, (size - a) / &c_crp);
                    let seat = Seat::Table { restaurant: r, table: t };
                    assert_eq!(crp.iter().find(|(s, _)| *s == seat).unwrap().1, *q);
                }
            }
        }
    }

    #[test]
    fn table_chain_is_normalized() {
        let pmf = table_count_pmf(&half(), 30).unwrap();
        assert_eq!(pmf.total(), ExactRational::from_integer(1.into()));
    }
}
