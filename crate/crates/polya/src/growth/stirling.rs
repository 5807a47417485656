//! Periodic d-Stirling permutations, their blocks, and the contour bijection with trees.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

use crate::error::{domain, Error, Result};
use crate::param::Param;
use crate::rng::{run_replicates, Rng};
use crate::special::ExactRational;
use crate::urn::{exact_pmf_dp, Pmf, ReplacementMatrix, Schedule, UrnSpec};

use super::tree::{Forest, ForestConfig, Node, NodeKind, OffsetMode, TreeFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol {
    pub label: u64,
    pub thick: bool,
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.thick {
            write!(f, "{}!", self.label)
        } else {
            write!(f, "{}", self.label)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodicStirlingPerm {
    symbols: Vec<Symbol>,
    d: u32,
    p: u64,
    t: u32,
    order: u64,
}

/// q_N = Nd + 1 + ⌊N/p⌋t.
pub fn insertion_places(d: u32, p: u64, t: u32, n: u64) -> u64 {
    n * d as u64 + 1 + (n / p) * t as u64
}

/// Q_N = ∏_{j=1}^{N−1} q_j.
pub fn stirling_count(d: u32, p: u64, t: u32, n: u64) -> BigUint {
    (1..n).fold(BigUint::one(), |acc, j| acc * BigUint::from(insertion_places(d, p, t, j)))
}

fn check_shape(d: u32, p: u64) -> Result<()> {
    if d < 1 {
        return domain("multiplicity d must be at least 1");
    }
    if p < 2 {
        return domain("period p must be at least 2");
    }
    Ok(())
}

impl PeriodicStirlingPerm {
    /// The order-one permutation 1^d.
    pub fn new(d: u32, p: u64, t: u32) -> Result<Self> {
        check_shape(d, p)?;
        let symbols = vec![Symbol { label: 1, thick: false }; d as usize];
        Ok(PeriodicStirlingPerm { symbols, d, p, t, order: 1 })
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    /// Number of distinct labels N.
    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn insertion_places(&self) -> usize {
        self.symbols.len() + 1
    }

    /// Insert (N+1)^d before symbol `gap` (gap = length appends), then the thick string if due.
    pub fn insert(&mut self, gap: usize) -> Result<()> {
        if gap > self.symbols.len() {
            return domain(format!("gap {gap} outside 0..={}", self.symbols.len()));
        }
        let label = self.order + 1;
        let block = std::iter::repeat_n(Symbol { label, thick: false }, self.d as usize);
        self.symbols.splice(gap..gap, block);
        if label.is_multiple_of(self.p) {
            self.symbols.extend(std::iter::repeat_n(Symbol { label, thick: true }, self.t as usize));
        }
        self.order = label;
        Ok(())
    }

    /// Checks multiplicities and the nesting rule for each symbol class.
    pub fn validate(&self) -> Result<()> {
        check_shape(self.d, self.p)?;
        let n = self.order;
        let mut counts = vec![[0u32; 2]; n as usize + 1];
        for (pos, s) in self.symbols.iter().enumerate() {
            if s.label < 1 || s.label > n {
                return Err(malformed(pos, format!("label {} outside 1..={n}", s.label)));
            }
            if s.thick && s.label % self.p != 0 {
                return Err(malformed(pos, format!("thick label {} is not a multiple of p={}", s.label, self.p)));
            }
            counts[s.label as usize][s.thick as usize] += 1;
        }
        for label in 1..=n {
            let [ordinary, thick] = counts[label as usize];
            let thick_due = if label % self.p == 0 { self.t } else { 0 };
            if ordinary != self.d || thick != thick_due {
                return domain(format!("label {label} occurs {ordinary}+{thick} times, expected {}+{thick_due}", self.d));
            }
        }
        for class in self.classes() {
            let (first, last) = class.1;
            for (pos, s) in self.symbols[first..=last].iter().enumerate() {
                if *s != class.0 && s.label <= class.0.label {
                    return Err(malformed(first + pos, format!("{s} lies between two copies of {}", class.0)));
                }
            }
        }
        Ok(())
    }

    /// First and last position of every symbol class.
    fn classes(&self) -> Vec<(Symbol, (usize, usize))> {
        let mut spans: std::collections::BTreeMap<Symbol, (usize, usize)> = Default::default();
        for (pos, s) in self.symbols.iter().enumerate() {
            spans.entry(*s).and_modify(|e| e.1 = pos).or_insert((pos, pos));
        }
        spans.into_iter().collect()
    }

    /// Decomposition into maximal substrings a_r…a_s with a_r = a_s.
    pub fn blocks(&self) -> Vec<Block> {
        let spans: std::collections::HashMap<Symbol, (usize, usize)> = self.classes().into_iter().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.symbols.len() {
            let head = self.symbols[start];
            let mut end = spans[&head].1;
            let mut pos = start;
            while pos <= end {
                end = end.max(spans[&self.symbols[pos]].1);
                pos += 1;
            }
            let symbols = end + 1 - start;
            let listed_size = if head.thick { (self.t + self.d) as usize } else { symbols };
            out.push(Block { start, symbols, head, listed_size });
            start = end + 1;
        }
        out
    }

    pub fn block_count(&self) -> usize {
        self.blocks().len()
    }

    /// Whitespace-separated symbols with `!` marking thick copies.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str, d: u32, p: u64, t: u32) -> Result<Self> {
        check_shape(d, p)?;
        let mut symbols = Vec::new();
        for (pos, token) in text.split_whitespace().enumerate() {
            let (digits, thick) = match token.strip_suffix('!') {
                Some(rest) => (rest, true),
                None => (token, false),
            };
            let label: u64 = digits.parse().map_err(|_| malformed(pos, format!("bad symbol {token:?}")))?;
            symbols.push(Symbol { label, thick });
        }
        let order = symbols.iter().map(|s| s.label).max().unwrap_or(0);
        let perm = PeriodicStirlingPerm { symbols, d, p, t, order };
        perm.validate()?;
        Ok(perm)
    }
}

impl fmt::Display for PeriodicStirlingPerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

fn malformed(position: usize, message: impl Into<String>) -> Error {
    Error::Malformed { position, message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub start: usize,
    /// Number of symbols in the block.
    pub symbols: usize,
    pub head: Symbol,
    /// Size under the listing convention: t + d for thick-headed blocks, symbol count otherwise.
    pub listed_size: usize,
}

/// One uniform insertion among the q_N places.
pub fn stirling_grow(mut perm: PeriodicStirlingPerm, rng: &mut Rng) -> Result<PeriodicStirlingPerm> {
    let gap = rng.random_range(0..perm.insertion_places());
    perm.insert(gap)?;
    Ok(perm)
}

/// Random permutation of order `n` grown from 1^d.
pub fn random_stirling(d: u32, p: u64, t: u32, n: u64, rng: &mut Rng) -> Result<PeriodicStirlingPerm> {
    if n < 1 {
        return domain("order must be at least 1");
    }
    let mut perm = PeriodicStirlingPerm::new(d, p, t)?;
    for _ in 1..n {
        perm = stirling_grow(perm, rng)?;
    }
    Ok(perm)
}

/// Every distinct permutation of order `n` reachable by insertion choices.
pub fn enumerate_stirling(d: u32, p: u64, t: u32, n: u64) -> Result<Vec<PeriodicStirlingPerm>> {
    const BUDGET: u64 = 2_000_000;
    let count = stirling_count(d, p, t, n);
    if count > BigUint::from(BUDGET) {
        return Err(Error::Budget(count.to_u128().unwrap_or(u128::MAX)));
    }
    let mut layer = vec![PeriodicStirlingPerm::new(d, p, t)?];
    for _ in 1..n {
        let mut next = Vec::new();
        let mut seen = HashSet::new();
        for perm in &layer {
            for gap in 0..perm.insertion_places() {
                let mut child = perm.clone();
                child.insert(gap)?;
                if seen.insert(child.symbols.clone()) {
                    next.push(child);
                }
            }
        }
        layer = next;
    }
    Ok(layer)
}

/// Contour code of a (d+1)-ary forest whose immigrant roots carry t slots.
pub fn tree_to_perm(forest: &Forest) -> Result<PeriodicStirlingPerm> {
    let config = forest.config();
    let TreeFamily::DAry { d: arity } = config.family else {
        return domain("the bijection needs a d-ary forest");
    };
    if config.mode != OffsetMode::Standard || config.bar.is_some() || !config.ell.is_integer() {
        return domain("the bijection needs standard offsets, no bar and integer ℓ");
    }
    let t = config.ell.exact().to_integer().to_u32().ok_or_else(|| Error::Domain("ℓ out of range".into()))?;
    let d = arity - 1;
    check_shape(d, config.p)?;
    let nodes = forest.nodes();
    fn child_at(nodes: &[Node], id: usize, slot: u32) -> Option<usize> {
        nodes[id].children.iter().copied().find(|&c| nodes[c].slot == Some(slot))
    }
    fn encode(nodes: &[Node], id: usize, arity: u32, out: &mut Vec<Symbol>) {
        let label = nodes[id].label;
        for slot in 0..arity {
            if let Some(c) = child_at(nodes, id, slot) {
                encode(nodes, c, arity, out);
            }
            if slot + 1 < arity {
                out.push(Symbol { label, thick: false });
            }
        }
    }
    let mut symbols = Vec::new();
    encode(nodes, forest.original_root(), arity, &mut symbols);
    for &root in forest.immigrant_roots() {
        let label = nodes[root].label;
        for slot in 0..t {
            symbols.push(Symbol { label, thick: true });
            if let Some(c) = child_at(nodes, root, slot) {
                encode(nodes, c, arity, &mut symbols);
            }
        }
    }
    let perm = PeriodicStirlingPerm { symbols, d, p: config.p, t, order: forest.size() };
    perm.validate()?;
    Ok(perm)
}

#[derive(Clone, Copy)]
enum Parent {
    Ordinary(u64),
    Root(u64),
}

struct Decoder<'a> {
    symbols: &'a [Symbol],
    d: u32,
    placement: Vec<Option<(Option<Parent>, u32)>>,
}

impl Decoder<'_> {
    /// Decode the subtree filling symbols[a..b], hanging below `parent` in `slot`.
    fn segment(&mut self, a: usize, b: usize, parent: Option<Parent>, slot: u32) -> Result<()> {
        if a == b {
            return Ok(());
        }
        if let Some(s) = self.symbols[a..b].iter().position(|s| s.thick) {
            return Err(malformed(a + s, "thick symbol inside an ordinary subtree"));
        }
        let (offset, min) = self.symbols[a..b].iter().enumerate().min_by_key(|(_, s)| s.label).expect("non-empty segment");
        let floor = match parent {
            Some(Parent::Ordinary(l)) | Some(Parent::Root(l)) => l,
            None => 0,
        };
        if min.label <= floor {
            return Err(malformed(a + offset, format!("label {} not larger than its parent {floor}", min.label)));
        }
        let label = min.label;
        let positions: Vec<usize> = (a..b).filter(|&i| self.symbols[i].label == label).collect();
        if positions.len() != self.d as usize {
            return Err(malformed(positions[0], format!("label {label} occurs {} times in its subtree", positions.len())));
        }
        let entry = &mut self.placement[label as usize];
        if entry.is_some() {
            return Err(malformed(positions[0], format!("label {label} appears in two subtrees")));
        }
        *entry = Some((parent, slot));
        let mut bounds = vec![a];
        for &p in &positions {
            bounds.push(p);
            bounds.push(p + 1);
        }
        bounds.push(b);
        for (k, pair) in bounds.chunks(2).enumerate() {
            self.segment(pair[0], pair[1], Some(Parent::Ordinary(label)), k as u32)?;
        }
        Ok(())
    }
}

/// Inverse of [`tree_to_perm`].
pub fn perm_to_tree(perm: &PeriodicStirlingPerm) -> Result<Forest> {
    let symbols = &perm.symbols;
    let n = perm.order;
    if n < 1 {
        return domain("empty permutation");
    }
    let mut decoder = Decoder { symbols, d: perm.d, placement: vec![None; n as usize + 1] };
    let first_thick = symbols.iter().position(|s| s.thick).unwrap_or(symbols.len());
    decoder.segment(0, first_thick, None, 0)?;
    let mut pos = first_thick;
    let mut root_label = perm.p;
    while pos < symbols.len() {
        let s = symbols[pos];
        if !s.thick || s.label != root_label {
            return Err(malformed(pos, format!("expected thick label {root_label}, found {s}")));
        }
        let copies: Vec<usize> = (pos..symbols.len()).filter(|&i| symbols[i] == s).collect();
        if copies.len() != perm.t as usize {
            return Err(malformed(pos, format!("thick label {root_label} occurs {} times", copies.len())));
        }
        let next_root = symbols[pos..]
            .iter()
            .position(|x| x.thick && x.label != root_label)
            .map_or(symbols.len(), |o| pos + o);
        if copies.last().is_some_and(|&c| c >= next_root) {
            return Err(malformed(next_root, "thick strings of two roots interleave"));
        }
        for (k, &c) in copies.iter().enumerate() {
            let end = copies.get(k + 1).copied().unwrap_or(next_root);
            decoder.segment(c + 1, end, Some(Parent::Root(root_label)), k as u32)?;
        }
        pos = next_root;
        root_label += perm.p;
    }
    if perm.t > 0 && root_label <= n {
        return Err(malformed(symbols.len(), format!("thick label {root_label} is missing")));
    }
    match decoder.placement[1] {
        Some((None, _)) => {}
        _ => return Err(malformed(0, "label 1 is not the original root")),
    }
    if let Some(missing) = (1..=n).find(|&l| decoder.placement[l as usize].is_none()) {
        return Err(malformed(symbols.len(), format!("label {missing} is missing")));
    }

    let mut ordinary_id = vec![0usize; n as usize + 1];
    let mut root_id = vec![0usize; (n / perm.p) as usize + 1];
    let mut nodes: Vec<Node> = Vec::new();
    for label in 1..=n {
        let kind = if label == 1 { NodeKind::OriginalRoot } else { NodeKind::Ordinary };
        ordinary_id[label as usize] = nodes.len();
        nodes.push(Node { id: nodes.len(), label, kind, parent: None, slot: None, children: Vec::new() });
        if label % perm.p == 0 {
            root_id[(label / perm.p) as usize] = nodes.len();
            nodes.push(Node { id: nodes.len(), label, kind: NodeKind::ImmigrantRoot, parent: None, slot: None, children: Vec::new() });
        }
    }
    for label in 2..=n {
        let (parent, slot) = decoder.placement[label as usize].expect("placed");
        let parent_id = match parent {
            Some(Parent::Ordinary(l)) => ordinary_id[l as usize],
            Some(Parent::Root(l)) => root_id[(l / perm.p) as usize],
            None => return Err(malformed(0, format!("label {label} is an extra root"))),
        };
        let id = ordinary_id[label as usize];
        nodes[id].parent = Some(parent_id);
        nodes[id].slot = Some(slot);
        nodes[parent_id].children.push(id);
    }
    let slots: Vec<Option<u32>> = nodes.iter().map(|n| n.slot).collect();
    for node in nodes.iter_mut() {
        node.children.sort_by_key(|&c| slots[c]);
    }
    let config = ForestConfig::new(
        TreeFamily::DAry { d: perm.d + 1 },
        perm.p,
        Param::integer(perm.t as i64),
        OffsetMode::Standard,
    );
    Forest::from_parts(config, nodes)
}

/// Urn stated for S_N: triangular with ℓ1 = d−1, ℓ2 = d−1+t, W_0 = 2, B_0 = d−1; S_N = W − 1 + ⌊N/p⌋.
pub fn block_urn_literal(d: u32, p: u64, t: u32) -> Result<UrnSpec> {
    check_shape(d, p)?;
    let dm1 = d as i64 - 1;
    let spec = UrnSpec::triangular(p, 1.into(), dm1.into(), (dm1 + t as i64).into(), 2.into(), dm1.into())?;
    Ok(spec.with_phase(1))
}

/// Urn tracking top-level gaps: thick steps add the appended block's outer gap; S_N = W − 1.
pub fn block_urn_gaps(d: u32, p: u64, t: u32) -> Result<UrnSpec> {
    check_shape(d, p)?;
    let (d, t) = (d as i64, t as i64);
    let ordinary = ReplacementMatrix::from_i64(&[&[1, d - 1], &[0, d]])?;
    let thick = if t == 0 {
        ordinary.clone()
    } else {
        ReplacementMatrix::from_i64(&[&[2, d - 2 + t], &[1, d - 1 + t]])?
    };
    let mut matrices = vec![ordinary; (p - 1) as usize];
    matrices.push(thick);
    let schedule = Schedule::periodic(matrices)?.with_phase(1);
    UrnSpec::custom(schedule, vec![2.into(), (d - 1).into()])
}

/// Exact law of the block count S_N predicted by an urn, with S = W − 1 + shift.
pub fn block_count_pmf(spec: &UrnSpec, n: u64, shift: u64) -> Result<Pmf<ExactRational>> {
    if n < 1 {
        return domain("order must be at least 1");
    }
    let pmf = exact_pmf_dp(spec, n - 1)?;
    let offset = ExactRational::from_integer((shift as i64 - 1).into());
    Ok(Pmf { support: pmf.support.iter().map(|w| w + &offset).collect(), probabilities: pmf.probabilities })
}

/// Exact block-count law by enumeration of all permutations of order `n` (uniform).
pub fn enumerated_block_count_pmf(d: u32, p: u64, t: u32, n: u64) -> Result<Pmf<ExactRational>> {
    let perms = enumerate_stirling(d, p, t, n)?;
    let mut counts: std::collections::BTreeMap<usize, u64> = Default::default();
    for perm in &perms {
        *counts.entry(perm.block_count()).or_insert(0) += 1;
    }
    let total = ExactRational::from_integer((perms.len() as i64).into());
    Ok(Pmf {
        support: counts.keys().map(|&k| ExactRational::from_integer((k as i64).into())).collect(),
        probabilities: counts.values().map(|&c| ExactRational::from_integer((c as i64).into()) / &total).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockUrnComparison {
    pub urn: serde_json::Value,
    pub relation: String,
    pub tv_distance: f64,
    pub exact_mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockCountReport {
    pub d: u32,
    pub p: u64,
    pub t: u32,
    pub n: u64,
    pub replicates: u64,
    pub seed: u64,
    pub empirical_mean: f64,
    pub literal: BlockUrnComparison,
    pub gaps: BlockUrnComparison,
}

/// Simulated block counts against the stated urn and the gap-tracking urn.
pub fn verify_block_count_law(
    d: u32,
    p: u64,
    t: u32,
    n: u64,
    replicates: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<BlockCountReport> {
    if replicates == 0 {
        return domain("replicates must be positive");
    }
    let samples = run_replicates(replicates, seed, threads, |rng, _| {
        random_stirling(d, p, t, n, rng).map(|perm| perm.block_count() as f64)
    });
    let values: Vec<f64> = samples.into_iter().collect::<Result<_>>()?;
    let compare = |spec: UrnSpec, shift: u64, relation: &str| -> Result<BlockUrnComparison> {
        let pmf = block_count_pmf(&spec, n, shift)?.to_f64();
        Ok(BlockUrnComparison {
            urn: spec.to_json(),
            relation: relation.into(),
            tv_distance: pmf.tv_distance_to_counts(&values),
            exact_mean: pmf.mean(),
        })
    };
    Ok(BlockCountReport {
        d,
        p,
        t,
        n,
        replicates,
        seed,
        empirical_mean: values.iter().sum::<f64>() / values.len() as f64,
        literal: compare(block_urn_literal(d, p, t)?, n / p, "S = W - 1 + floor(N/p)")?,
        gaps: compare(block_urn_gaps(d, p, t)?, 0, "S = W - 1")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn sym(text: &str) -> PeriodicStirlingPerm {
        PeriodicStirlingPerm::parse(text, 2, 2, 3).unwrap()
    }

    #[test]
    fn insertion_places_example() {
        assert_eq!(insertion_places(2, 2, 3, 2), 8);
        assert_eq!(stirling_count(2, 2, 3, 2), BigUint::from(3u32));
        let texts: Vec<String> = enumerate_stirling(2, 2, 3, 2).unwrap().iter().map(|p| p.to_text()).collect();
        assert_eq!(texts, vec!["2 2 1 1 2! 2! 2!", "1 2 2 1 2! 2! 2!", "1 1 2 2 2! 2! 2!"]);
    }

    #[test]
    fn classical_counts_when_thin() {
        for n in 1..7u64 {
            let classical = (1..n).fold(BigUint::one(), |a, j| a * BigUint::from(2 * j + 1));
            assert_eq!(stirling_count(2, 3, 0, n), classical);
        }
    }

    #[test]
    fn example_blocks() {
        let perm = sym("2 3 3 2 1 1 2! 2! 4 4 2! 4! 4! 4!");
        let blocks = perm.blocks();
        let starts: Vec<usize> = blocks.iter().map(|b| b.start).collect();
        assert_eq!(starts, vec![0, 4, 6, 11]);
        let sizes: Vec<usize> = blocks.iter().map(|b| b.symbols).collect();
        assert_eq!(sizes, vec![4, 2, 5, 3]);
        assert_eq!(blocks[3].listed_size, 5);
        let single = PeriodicStirlingPerm::new(3, 2, 1).unwrap();
        assert_eq!(single.blocks().len(), 1);
        assert_eq!(single.blocks()[0].symbols, 3);
    }

    #[test]
    fn example_bijection() {
        let perm = sym("2 3 3 2 1 1 2! 2! 4 4 2! 4! 4! 4!");
        let forest = perm_to_tree(&perm).unwrap();
        assert_eq!(forest.to_bracket_string(), "1(2(3)) 2!(4) 4!");
        let two = forest.ordinary_node(2).unwrap();
        let three = forest.ordinary_node(3).unwrap();
        assert_eq!(forest.nodes()[two].slot, Some(0));
        assert_eq!(forest.nodes()[three].slot, Some(1));
        let four = forest.ordinary_node(4).unwrap();
        assert_eq!(forest.nodes()[four].slot, Some(1));
        assert_eq!(tree_to_perm(&forest).unwrap(), perm);
        let bare = perm_to_tree(&PeriodicStirlingPerm::new(2, 2, 3).unwrap()).unwrap();
        assert_eq!(tree_to_perm(&bare).unwrap().to_text(), "1 1");
    }

    #[test]
    fn malformed_inputs_report_positions() {
        let bad = PeriodicStirlingPerm::parse("1 2 1 2", 2, 2, 0);
        assert!(matches!(bad, Err(Error::Malformed { .. }) | Err(Error::Domain(_))));
        let bad = PeriodicStirlingPerm::parse("1 x", 2, 2, 0);
        assert!(matches!(bad, Err(Error::Malformed { position: 1, .. })));
    }

    #[test]
    fn random_round_trips() {
        let mut rng = rng_from_seed(2024);
        for n in 1..=40 {
            let perm = random_stirling(2, 2, 3, n, &mut rng).unwrap();
            perm.validate().unwrap();
            let forest = perm_to_tree(&perm).unwrap();
            forest.check_invariants().unwrap();
            assert_eq!(tree_to_perm(&forest).unwrap(), perm);
        }
    }

    #[test]
    fn enumeration_counts() {
        for (d, p, t, n) in [(2, 2, 3, 3), (2, 3, 1, 4), (1, 2, 2, 4)] {
            let perms = enumerate_stirling(d, p, t, n).unwrap();
            assert_eq!(BigUint::from(perms.len()), stirling_count(d, p, t, n), "{d} {p} {t} {n}");
        }
    }

    fn nonzero(pmf: Pmf<ExactRational>) -> Vec<(ExactRational, ExactRational)> {
        pmf.support.into_iter().zip(pmf.probabilities).filter(|(_, q)| *q != ExactRational::from_integer(0.into())).collect()
    }

    #[test]
    fn gap_urn_equals_enumerated_block_law() {
        for (d, p, t, n) in [(2, 2, 3, 4), (2, 3, 1, 5), (1, 2, 2, 5), (3, 2, 2, 4)] {
            let exact = nonzero(enumerated_block_count_pmf(d, p, t, n).unwrap());
            let gaps = nonzero(block_count_pmf(&block_urn_gaps(d, p, t).unwrap(), n, 0).unwrap());
            assert_eq!(exact, gaps, "{d} {p} {t} {n}");
            let literal = nonzero(block_count_pmf(&block_urn_literal(d, p, t).unwrap(), n, n / p).unwrap());
            assert_ne!(exact, literal, "{d} {p} {t} {n}");
        }
    }
}
