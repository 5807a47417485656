//! Increasing trees with periodic immigration and their urn correspondences.

use num_traits::ToPrimitive;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::param::Param;
use crate::rng::{mix64, run_replicates, Rng};
use crate::special::ExactRational;
use crate::urn::{exact_pmf_dp, simulate_final, Pmf, UrnSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeFamily {
    Recursive,
    DAry { d: u32 },
    Gport { alpha: Param },
}

impl TreeFamily {
    /// Connectivity increment σ per ordinary insertion and offset κ.
    pub fn sigma_kappa(&self) -> (ExactRational, ExactRational) {
        let int = |n: i64| ExactRational::from_integer(n.into());
        match self {
            TreeFamily::Recursive => (int(1), int(0)),
            TreeFamily::DAry { d } => (int(*d as i64 - 1), int(1)),
            TreeFamily::Gport { alpha } => (alpha.exact() + int(1), int(-1)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            TreeFamily::Recursive => "recursive".into(),
            TreeFamily::DAry { d } => format!("{d}-ary"),
            TreeFamily::Gport { alpha } => format!("gport(alpha={alpha})"),
        }
    }
}

/// Where the original root sits: labeled 1 and ordinary, or labeled 0 with immigrant weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    Standard,
    Crp,
}

impl std::str::FromStr for OffsetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(OffsetMode::Standard),
            "crp" => Ok(OffsetMode::Crp),
            other => Err(Error::Parse(format!("unknown offset mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub family: TreeFamily,
    pub p: u64,
    pub ell: Param,
    pub mode: OffsetMode,
    /// Attraction β of a bar root, if present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar: Option<Param>,
}

impl ForestConfig {
    pub fn new(family: TreeFamily, p: u64, ell: Param, mode: OffsetMode) -> Self {
        ForestConfig { family, p, ell, mode, bar: None }
    }

    pub fn with_bar(mut self, beta: Param) -> Self {
        self.bar = Some(beta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return domain("period p must be at least 1");
        }
        if self.ell.is_negative() {
            return domain("immigrant connectivity ℓ must be non-negative");
        }
        match &self.family {
            TreeFamily::Recursive => {}
            TreeFamily::DAry { d } if *d < 2 => return domain("d-ary trees need d ≥ 2"),
            TreeFamily::DAry { .. } => {}
            TreeFamily::Gport { alpha } if !alpha.is_positive() => return domain("GPORT needs α > 0"),
            TreeFamily::Gport { .. } => {}
        }
        if let Some(beta) = &self.bar {
            if !beta.is_positive() {
                return domain("bar attraction β must be positive");
            }
            if !matches!(self.family, TreeFamily::Gport { .. }) {
                return domain("a bar root needs the GPORT family");
            }
        }
        Ok(())
    }

    /// d-ary family with non-integer ℓ: roots keep weight ℓ and their children lose one slot.
    pub fn trimmed(&self) -> bool {
        matches!(self.family, TreeFamily::DAry { .. }) && !self.ell.is_integer()
    }

    /// Closed-form total connectivity after `n_ordinary` ordinary insertions.
    pub fn connectivity_at(&self, n_ordinary: u64) -> ExactRational {
        let (sigma, kappa) = self.family.sigma_kappa();
        let int = |n: u64| ExactRational::from_integer(n.into());
        let n = n_ordinary / self.p;
        let k = n_ordinary % self.p;
        let ell = self.ell.exact();
        let base = match self.mode {
            OffsetMode::Standard => int(n) * (int(self.p) * &sigma + ell) + int(k) * &sigma + kappa,
            OffsetMode::Crp => int(n_ordinary) * &sigma + int(n + 1) * ell,
        };
        match &self.bar {
            Some(beta) => base + beta.exact(),
            None => base,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Ordinary,
    ImmigrantRoot,
    OriginalRoot,
    BarRoot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub label: u64,
    pub kind: NodeKind,
    pub parent: Option<usize>,
    /// Slot index in the parent (d-ary) or insertion rank among siblings.
    pub slot: Option<u32>,
    /// Children ordered by slot.
    pub children: Vec<usize>,
}

impl Node {
    pub fn outdegree(&self) -> usize {
        self.children.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    config: ForestConfig,
    nodes: Vec<Node>,
    ordinary: u64,
    ordinary_ids: Vec<usize>,
    immigrant_roots: Vec<usize>,
    original_root: usize,
    bar_root: Option<usize>,
}

impl Forest {
    pub fn new(config: ForestConfig) -> Result<Self> {
        config.validate()?;
        let (label, ordinary) = match config.mode {
            OffsetMode::Standard => (1, 1),
            OffsetMode::Crp => (0, 0),
        };
        let mut forest = Forest {
            nodes: Vec::new(),
            ordinary,
            ordinary_ids: Vec::new(),
            immigrant_roots: Vec::new(),
            original_root: 0,
            bar_root: None,
            config,
        };
        forest.push_node(label, NodeKind::OriginalRoot, None, None);
        if forest.config.mode == OffsetMode::Standard {
            forest.ordinary_ids.push(0);
            if forest.config.p == 1 {
                let root = forest.push_node(1, NodeKind::ImmigrantRoot, None, None);
                forest.immigrant_roots.push(root);
            }
        }
        if forest.config.bar.is_some() {
            forest.bar_root = Some(forest.push_node(0, NodeKind::BarRoot, None, None));
        }
        Ok(forest)
    }

    /// Forest after growing to `n` ordinary nodes.
    pub fn grown(config: ForestConfig, n: u64, rng: &mut Rng) -> Result<Self> {
        let mut forest = Forest::new(config)?;
        while forest.ordinary < n {
            forest.grow(rng)?;
        }
        Ok(forest)
    }

    fn push_node(&mut self, label: u64, kind: NodeKind, parent: Option<usize>, slot: Option<u32>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { id, label, kind, parent, slot, children: Vec::new() });
        if let Some(parent) = parent {
            let siblings = &self.nodes[parent].children;
            let pos = siblings.partition_point(|&c| self.nodes[c].slot < slot);
            self.nodes[parent].children.insert(pos, id);
        }
        id
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Number of ordinary nodes N.
    pub fn size(&self) -> u64 {
        self.ordinary
    }

    pub fn original_root(&self) -> usize {
        self.original_root
    }

    pub fn bar_root(&self) -> Option<usize> {
        self.bar_root
    }

    pub fn immigrant_roots(&self) -> &[usize] {
        &self.immigrant_roots
    }

    /// Node id of the ordinary node with `label`.
    pub fn ordinary_node(&self, label: u64) -> Result<usize> {
        if label < 1 || label > self.ordinary {
            return domain(format!("ordinary label {label} outside 1..={}", self.ordinary));
        }
        Ok(self.ordinary_ids[(label - 1) as usize])
    }

    /// Roots carrying the immigrant weight rule, in creation order.
    fn is_immigrant_weighted(&self, id: usize) -> bool {
        match self.nodes[id].kind {
            NodeKind::ImmigrantRoot => true,
            NodeKind::OriginalRoot => self.config.mode == OffsetMode::Crp,
            _ => false,
        }
    }

    /// Number of child slots of a d-ary node, `None` when unbounded.
    fn capacity(&self, id: usize) -> Option<u32> {
        let TreeFamily::DAry { d } = self.config.family else {
            return None;
        };
        let node = &self.nodes[id];
        if node.kind == NodeKind::BarRoot {
            return None;
        }
        if self.is_immigrant_weighted(id) {
            return if self.config.trimmed() { None } else { self.config.ell.exact().to_integer().to_u32() };
        }
        let under_root = node.parent.is_some_and(|p| self.is_immigrant_weighted(p));
        if self.config.trimmed() && under_root {
            Some(d - 1)
        } else {
            Some(d)
        }
    }

    /// Attraction weight of node `id`.
    pub fn weight(&self, id: usize) -> f64 {
        let node = &self.nodes[id];
        let deg = node.outdegree() as f64;
        if node.kind == NodeKind::BarRoot {
            return deg + self.config.bar.as_ref().map_or(0.0, Param::f64);
        }
        let ell = self.config.ell.f64();
        let immigrant = self.is_immigrant_weighted(id);
        match &self.config.family {
            TreeFamily::Recursive => {
                if immigrant {
                    ell
                } else {
                    1.0
                }
            }
            TreeFamily::DAry { .. } => match self.capacity(id) {
                Some(c) => c as f64 - deg,
                None => ell,
            },
            TreeFamily::Gport { alpha } => {
                if immigrant {
                    deg + ell
                } else {
                    deg + alpha.f64()
                }
            }
        }
    }

    /// Sum of the attraction weights of all nodes.
    pub fn weight_sum(&self) -> f64 {
        crate::rng::compensated_sum((0..self.nodes.len()).map(|i| self.weight(i)))
    }

    /// Closed-form total connectivity C_N.
    pub fn connectivity(&self) -> f64 {
        self.config.connectivity_at(self.ordinary).to_f64().unwrap_or(f64::NAN)
    }

    /// Attach ordinary node N+1 by the weight rule, then add an immigrant root when N+1 ≡ 0 mod p.
    pub fn grow(&mut self, rng: &mut Rng) -> Result<()> {
        let weights: Vec<f64> = (0..self.nodes.len()).map(|i| self.weight(i)).collect();
        let total: f64 = crate::rng::compensated_sum(weights.iter().copied());
        let closed = self.connectivity();
        debug_assert!(
            (total - closed).abs() <= 1e-9 * closed.abs().max(1.0),
            "weights sum to {total}, connectivity is {closed}"
        );
        if total <= 0.0 {
            return domain("forest has zero total attraction");
        }
        let target = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut chosen = weights.iter().rposition(|&w| w > 0.0).expect("positive weight");
        for (i, w) in weights.iter().enumerate() {
            cum += w;
            if target < cum && *w > 0.0 {
                chosen = i;
                break;
            }
        }
        let slot = match self.capacity(chosen) {
            Some(cap) => {
                let used: Vec<u32> = self.nodes[chosen].children.iter().filter_map(|&c| self.nodes[c].slot).collect();
                let free: Vec<u32> = (0..cap).filter(|s| !used.contains(s)).collect();
                free[rng.random_range(0..free.len())]
            }
            None => self.nodes[chosen].outdegree() as u32,
        };
        self.attach(chosen, slot);
        Ok(())
    }

    /// Insert ordinary node N+1 into slot `slot` of node `parent`; adds the immigrant root if due.
    pub fn attach(&mut self, parent: usize, slot: u32) {
        let label = self.ordinary + 1;
        let id = self.push_node(label, NodeKind::Ordinary, Some(parent), Some(slot));
        self.ordinary_ids.push(id);
        self.ordinary = label;
        if label.is_multiple_of(self.config.p) {
            let root = self.push_node(label, NodeKind::ImmigrantRoot, None, None);
            self.immigrant_roots.push(root);
        }
    }

    /// Subtree sizes (node itself included) for every node id.
    pub fn subtree_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![1u64; self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            if let Some(parent) = self.nodes[id].parent {
                sizes[parent] += sizes[id];
            }
        }
        sizes
    }

    /// D_{N,j}: size of the subtree of ordinary node j, j included.
    pub fn descendants(&self, j: u64) -> Result<u64> {
        let id = self.ordinary_node(j)?;
        Ok(self.subtree_sizes()[id])
    }

    /// Descendants of the m-th immigrant root, the root itself excluded.
    pub fn root_descendants(&self, m: usize) -> Result<u64> {
        if m < 1 || m > self.immigrant_roots.len() {
            return domain(format!("immigrant root {m} outside 1..={}", self.immigrant_roots.len()));
        }
        Ok(self.subtree_sizes()[self.immigrant_roots[m - 1]] - 1)
    }

    /// X_{N,j}: outdegree of ordinary node j.
    pub fn outdegree(&self, j: u64) -> Result<u64> {
        Ok(self.nodes[self.ordinary_node(j)?].outdegree() as u64)
    }

    /// B_{N,m}: number of branches of size m at the original root; index 0 is unused.
    pub fn branch_profile(&self) -> Vec<u64> {
        let sizes = self.subtree_sizes();
        let mut profile = vec![0u64];
        for &c in &self.nodes[self.original_root].children {
            let s = sizes[c] as usize;
            if profile.len() <= s {
                profile.resize(s + 1, 0);
            }
            profile[s] += 1;
        }
        profile
    }

    /// Branch sizes of each immigrant-weighted root (original root first in crp mode).
    pub fn root_branches(&self) -> Vec<Vec<u64>> {
        let sizes = self.subtree_sizes();
        let mut roots: Vec<usize> = Vec::new();
        if self.is_immigrant_weighted(self.original_root) {
            roots.push(self.original_root);
        }
        roots.extend_from_slice(&self.immigrant_roots);
        roots.iter().map(|&r| self.nodes[r].children.iter().map(|&c| sizes[c]).collect()).collect()
    }

    /// Non-root nodes in the bar tree.
    pub fn bar_size(&self) -> Option<u64> {
        self.bar_root.map(|b| self.subtree_sizes()[b] - 1)
    }

    /// Top-level ancestor of `id` whose parent is a root.
    pub fn branch_of(&self, id: usize) -> Option<usize> {
        let mut v = id;
        loop {
            let parent = self.nodes[v].parent?;
            if self.nodes[parent].parent.is_none() {
                return Some(v);
            }
            v = parent;
        }
    }

    /// Labels increase along edges, d-ary slot bounds hold, weights match the closed form.
    pub fn check_invariants(&self) -> Result<()> {
        for node in &self.nodes {
            if let Some(parent) = node.parent {
                let pl = self.nodes[parent].label;
                if node.label <= pl {
                    return domain(format!("label {} is not larger than its parent's label {pl}", node.label));
                }
                if node.kind != NodeKind::Ordinary {
                    return domain(format!("root-type node {} has a parent", node.id));
                }
            }
            if let Some(cap) = self.capacity(node.id) {
                if node.outdegree() > cap as usize {
                    return domain(format!("node {} exceeds {cap} children", node.id));
                }
                let mut slots: Vec<u32> = node.children.iter().filter_map(|&c| self.nodes[c].slot).collect();
                let n = slots.len();
                slots.dedup();
                if slots.len() != n || slots.iter().any(|&s| s >= cap) {
                    return domain(format!("node {} has invalid child slots", node.id));
                }
            }
        }
        if self.immigrant_roots.len() as u64 != self.ordinary / self.config.p {
            return domain("number of immigrant roots differs from ⌊N/p⌋");
        }
        let (sum, closed) = (self.weight_sum(), self.connectivity());
        if (sum - closed).abs() > 1e-9 * closed.abs().max(1.0) {
            return domain(format!("weights sum to {sum}, connectivity is {closed}"));
        }
        Ok(())
    }

    /// Parent-array CSV: one row per node.
    pub fn to_parent_csv(&self) -> String {
        let mut out = String::from("id,label,kind,parent,slot\n");
        for node in &self.nodes {
            let kind = serde_json::to_value(node.kind).expect("kind").as_str().unwrap_or_default().to_string();
            let parent = node.parent.map(|p| p.to_string()).unwrap_or_default();
            let slot = node.slot.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", node.id, node.label, kind, parent, slot));
        }
        out
    }

    /// Bracket string: `label(child child …)` per tree, trees separated by spaces.
    /// Immigrant roots carry a trailing `!`, the bar root is written `bar`.
    pub fn to_bracket_string(&self) -> String {
        fn write(forest: &Forest, id: usize, out: &mut String) {
            let node = &forest.nodes[id];
            match node.kind {
                NodeKind::BarRoot => out.push_str("bar"),
                NodeKind::ImmigrantRoot => out.push_str(&format!("{}!", node.label)),
                _ => out.push_str(&node.label.to_string()),
            }
            if !node.children.is_empty() {
                out.push('(');
                for (i, &c) in node.children.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    write(forest, c, out);
                }
                out.push(')');
            }
        }
        let mut out = String::new();
        for node in self.nodes.iter().filter(|n| n.parent.is_none()) {
            if !out.is_empty() {
                out.push(' ');
            }
            write(self, node.id, &mut out);
        }
        out
    }

    /// Assemble a forest from explicit nodes; used by the permutation bijection.
    pub(crate) fn from_parts(config: ForestConfig, nodes: Vec<Node>) -> Result<Self> {
        let mut ordinary_ids = Vec::new();
        let mut immigrant_roots = Vec::new();
        let mut original_root = None;
        let mut bar_root = None;
        for node in &nodes {
            match node.kind {
                NodeKind::Ordinary => ordinary_ids.push(node.id),
                NodeKind::ImmigrantRoot => immigrant_roots.push(node.id),
                NodeKind::OriginalRoot => original_root = Some(node.id),
                NodeKind::BarRoot => bar_root = Some(node.id),
            }
        }
        let original_root = original_root.ok_or_else(|| Error::Domain("forest has no original root".into()))?;
        if config.mode == OffsetMode::Standard {
            ordinary_ids.insert(0, original_root);
        }
        let forest = Forest {
            ordinary: ordinary_ids.len() as u64,
            config,
            nodes,
            ordinary_ids,
            immigrant_roots,
            original_root,
            bar_root,
        };
        forest.check_invariants()?;
        Ok(forest)
    }
}

/// Tree statistic compared against an exact urn law.
#[derive(Clone, Debug, Serialize)]
pub struct TvReport {
    pub statistic: String,
    pub forest: ForestConfig,
    pub n: u64,
    pub index: u64,
    pub replicates: u64,
    pub seed: u64,
    pub urn: serde_json::Value,
    pub tv_distance: f64,
    pub empirical_mean: f64,
    pub exact_mean: f64,
    pub exact_pmf: Pmf<f64>,
}

fn int(n: u64) -> ExactRational {
    ExactRational::from_integer(n.into())
}

/// Pólya-Young urn whose white count after N−j draws gives σD_{N,j}+κ.
pub fn descendant_urn(config: &ForestConfig, j: u64) -> Result<UrnSpec> {
    config.validate()?;
    if j < 1 {
        return domain("node label j must be at least 1");
    }
    let (sigma, kappa) = config.family.sigma_kappa();
    let w0 = &sigma + &kappa;
    let b0 = config.connectivity_at(j) - &w0;
    let spec = UrnSpec::polya_young(config.p, Param(sigma), config.ell.clone(), Param(w0), Param(b0))?;
    Ok(spec.with_phase(j % config.p))
}

/// Pólya-Young urn for the m-th immigrant root: white count ℓ + σ·(descendants).
pub fn root_descendant_urn(config: &ForestConfig, m: u64) -> Result<UrnSpec> {
    config.validate()?;
    let (sigma, _) = config.family.sigma_kappa();
    let w0 = config.ell.exact().clone();
    let b0 = config.connectivity_at(m * config.p) - &w0;
    UrnSpec::polya_young(config.p, Param(sigma), config.ell.clone(), Param(w0), Param(b0))
}

/// Periodic triangular urn for GPORT outdegrees: white count X_{N,j} + α.
pub fn outdegree_urn(config: &ForestConfig, j: u64) -> Result<UrnSpec> {
    config.validate()?;
    let TreeFamily::Gport { alpha } = &config.family else {
        return domain("outdegree urn is defined for GPORT forests");
    };
    if j < 1 {
        return domain("node label j must be at least 1");
    }
    let ell2 = Param(alpha.exact() + config.ell.exact());
    let b0 = Param(config.connectivity_at(j) - alpha.exact());
    let spec = UrnSpec::triangular(config.p, Param::integer(1), alpha.clone(), ell2, alpha.clone(), b0)?;
    Ok(spec.with_phase(j % config.p))
}

/// Exact law of (W − shift)/scale after `draws` draws.
fn transformed_pmf(spec: &UrnSpec, draws: u64, shift: &ExactRational, scale: &ExactRational) -> Result<Pmf<f64>> {
    let pmf = exact_pmf_dp(spec, draws)?;
    let support = pmf.support.iter().map(|w| ((w - shift) / scale).to_f64().unwrap_or(f64::NAN)).collect();
    let probabilities = pmf.probabilities.iter().map(|q| q.to_f64().unwrap_or(f64::NAN)).collect();
    Ok(Pmf { support, probabilities })
}

fn tv_report<F>(
    statistic: &str,
    config: &ForestConfig,
    n: u64,
    index: u64,
    replicates: u64,
    seed: u64,
    threads: Option<usize>,
    spec: &UrnSpec,
    exact: Pmf<f64>,
    measure: F,
) -> Result<TvReport>
where
    F: Fn(&Forest) -> Result<u64> + Sync + Send,
{
    if replicates == 0 {
        return domain("replicates must be positive");
    }
    let samples = run_replicates(replicates, seed, threads, |rng, _| {
        let forest = Forest::grown(config.clone(), n, rng)?;
        measure(&forest).map(|x| x as f64)
    });
    let values: Vec<f64> = samples.into_iter().collect::<Result<_>>()?;
    Ok(TvReport {
        statistic: statistic.into(),
        forest: config.clone(),
        n,
        index,
        replicates,
        seed,
        urn: spec.to_json(),
        tv_distance: exact.tv_distance_to_counts(&values),
        empirical_mean: crate::rng::compensated_sum(values.iter().copied()) / values.len() as f64,
        exact_mean: exact.mean(),
        exact_pmf: exact,
    })
}

/// Empirical D_{N,j} over simulated forests against the exact urn PMF.
pub fn verify_descendants_law(
    config: &ForestConfig,
    n: u64,
    j: u64,
    replicates: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<TvReport> {
    if j < 1 || j > n {
        return domain(format!("need 1 ≤ j ≤ N, got j={j}, N={n}"));
    }
    let spec = descendant_urn(config, j)?;
    let (sigma, kappa) = config.family.sigma_kappa();
    let exact = transformed_pmf(&spec, n - j, &kappa, &sigma)?;
    tv_report("descendants", config, n, j, replicates, seed, threads, &spec, exact, |f| f.descendants(j))
}

/// Empirical descendants of the m-th immigrant root against the exact urn PMF.
pub fn verify_root_descendants_law(
    config: &ForestConfig,
    n: u64,
    m: u64,
    replicates: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<TvReport> {
    if m < 1 || m * config.p > n {
        return domain(format!("need 1 ≤ m ≤ ⌊N/p⌋, got m={m}"));
    }
    let spec = root_descendant_urn(config, m)?;
    let (sigma, _) = config.family.sigma_kappa();
    let exact = transformed_pmf(&spec, n - m * config.p, config.ell.exact(), &sigma)?;
    tv_report("root_descendants", config, n, m, replicates, seed, threads, &spec, exact, |f| {
        f.root_descendants(m as usize)
    })
}

/// Empirical GPORT outdegree X_{N,j} against the periodic triangular urn PMF.
pub fn verify_outdegree_law(
    config: &ForestConfig,
    n: u64,
    j: u64,
    replicates: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<TvReport> {
    if j < 1 || j > n {
        return domain(format!("need 1 ≤ j ≤ N, got j={j}, N={n}"));
    }
    let spec = outdegree_urn(config, j)?;
    let TreeFamily::Gport { alpha } = &config.family else { unreachable!() };
    let exact = transformed_pmf(&spec, n - j, alpha.exact(), &int(1))?;
    tv_report("outdegree", config, n, j, replicates, seed, threads, &spec, exact, |f| f.outdegree(j))
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchRow {
    pub size: usize,
    pub tree_mean: f64,
    pub tree_se: f64,
    pub urn_mean: f64,
    pub urn_se: f64,
    /// Difference in units of the combined standard error.
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchReport {
    pub forest: ForestConfig,
    pub n: u64,
    pub replicates: u64,
    pub seed: u64,
    pub urn: serde_json::Value,
    pub rows: Vec<BranchRow>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = crate::rng::sample_moments(xs);
    (m.mean, (m.variance / xs.len() as f64).sqrt())
}

/// Root branch counts B_{N,m}, m ≤ j, from crp-mode GPORT forests against the branch urn.
pub fn verify_branch_profile(
    alpha: Param,
    p: u64,
    ell: Param,
    n: u64,
    j: usize,
    replicates: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<BranchReport> {
    let config = ForestConfig::new(TreeFamily::Gport { alpha: alpha.clone() }, p, ell.clone(), OffsetMode::Crp);
    let spec = UrnSpec::branch_urn(p, alpha.clone(), ell, j)?;
    if replicates < 2 {
        return domain("need at least two replicates");
    }
    let trees = run_replicates(replicates, seed, threads, |rng, _| {
        let forest = Forest::grown(config.clone(), n, rng)?;
        let profile = forest.branch_profile();
        Ok((1..=j).map(|m| profile.get(m).copied().unwrap_or(0) as f64).collect::<Vec<f64>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let a = alpha.f64();
    let urns = run_replicates(replicates, mix64(seed, 0xB7A9C4), threads, |rng, _| {
        let z = simulate_final(&spec, n, rng)?;
        Ok((1..=j).map(|m| z[m] / (m as f64 * (a + 1.0) - 1.0)).collect::<Vec<f64>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rows = (0..j)
        .map(|i| {
            let t: Vec<f64> = trees.iter().map(|r| r[i]).collect();
            let u: Vec<f64> = urns.iter().map(|r| r[i]).collect();
            let (tree_mean, tree_se) = mean_se(&t);
            let (urn_mean, urn_se) = mean_se(&u);
            let se = (tree_se * tree_se + urn_se * urn_se).sqrt();
            let z = if se > 0.0 { (tree_mean - urn_mean) / se } else { 0.0 };
            BranchRow { size: i + 1, tree_mean, tree_se, urn_mean, urn_se, z }
        })
        .collect();
    Ok(BranchReport { forest: config, n, replicates, seed, urn: spec.to_json(), rows })
}

/// Probability that node N+1 attaches to `id`.
pub fn attachment_probability(forest: &Forest, id: usize) -> f64 {
    forest.weight(id) / forest.weight_sum()
}
