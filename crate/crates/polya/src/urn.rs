//! Urn specifications, draws, trajectories, exact PMFs and the history-enumeration oracle.

use num_traits::{One, ToPrimitive, Zero};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{domain, Error, Result};
use crate::param::Param;
use crate::rng::{rng_from_seed, Rng};
use crate::special::ExactRational;

/// Ball replacement matrix: row = drawn color, column = color receiving balls.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplacementMatrix {
    entries: Vec<Vec<Param>>,
    float: Vec<Vec<f64>>,
}

impl ReplacementMatrix {
    pub fn new(entries: Vec<Vec<Param>>) -> Result<Self> {
        let t = entries.len();
        if t < 2 {
            return domain("replacement matrix needs at least two colors");
        }
        if entries.iter().any(|row| row.len() != t) {
            return domain("replacement matrix must be square");
        }
        let float = entries.iter().map(|row| row.iter().map(Param::f64).collect()).collect();
        Ok(ReplacementMatrix { entries, float })
    }

    pub fn from_i64(rows: &[&[i64]]) -> Result<Self> {
        Self::new(rows.iter().map(|r| r.iter().map(|&x| Param::integer(x)).collect()).collect())
    }

    pub fn diagonal(t: usize, sigma: &Param) -> Self {
        let entries = (0..t)
            .map(|i| (0..t).map(|j| if i == j { sigma.clone() } else { Param::zero() }).collect())
            .collect();
        Self::new(entries).expect("diagonal matrix is valid")
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> &ExactRational {
        self.entries[row][col].exact()
    }

    pub fn entry_f64(&self, row: usize, col: usize) -> f64 {
        self.float[row][col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.float[row]
    }

    pub fn entries(&self) -> &[Vec<Param>] {
        &self.entries
    }

    pub fn row_sum(&self, row: usize) -> ExactRational {
        self.entries[row].iter().fold(ExactRational::zero(), |acc, x| acc + x.exact())
    }

    /// Common row sum, if every row adds the same number of balls.
    pub fn balanced_total(&self) -> Option<ExactRational> {
        let first = self.row_sum(0);
        (1..self.dim()).all(|r| self.row_sum(r) == first).then_some(first)
    }
}

impl Serialize for ReplacementMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReplacementMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<Vec<Param>>::deserialize(d)?;
        ReplacementMatrix::new(entries).map_err(serde::de::Error::custom)
    }
}

/// Rule producing the matrix index b_n (1-based) used at draw n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceRule {
    /// b_n = t_n + 1 with t the Thue-Morse sequence.
    ThueMorse,
    Constant(usize),
    /// Explicit list, repeated cyclically.
    Cycle(Vec<usize>),
}

impl SequenceRule {
    pub fn index(&self, n: u64) -> usize {
        match self {
            SequenceRule::ThueMorse => (n.count_ones() % 2) as usize + 1,
            SequenceRule::Constant(k) => *k,
            SequenceRule::Cycle(v) => v[((n - 1) % v.len() as u64) as usize],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Draw i uses M_k with k = ((i − 1 + phase) mod p) + 1.
    Periodic {
        matrices: Vec<ReplacementMatrix>,
        #[serde(default)]
        phase: u64,
    },
    Sequence {
        rule: SequenceRule,
        matrices: Vec<ReplacementMatrix>,
    },
}

impl Schedule {
    pub fn periodic(matrices: Vec<ReplacementMatrix>) -> Result<Self> {
        let s = Schedule::Periodic { matrices, phase: 0 };
        s.validate()?;
        Ok(s)
    }

    pub fn sequence(rule: SequenceRule, matrices: Vec<ReplacementMatrix>) -> Result<Self> {
        let s = Schedule::Sequence { rule, matrices };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let matrices = self.matrices();
        if matrices.is_empty() {
            return domain("schedule needs at least one matrix");
        }
        let t = matrices[0].dim();
        if matrices.iter().any(|m| m.dim() != t) {
            return domain("all schedule matrices must have the same dimension");
        }
        if let Schedule::Sequence { rule, matrices } = self {
            let m = matrices.len();
            let bad = match rule {
                SequenceRule::ThueMorse => m < 2,
                SequenceRule::Constant(k) => *k < 1 || *k > m,
                SequenceRule::Cycle(v) => v.is_empty() || v.iter().any(|&k| k < 1 || k > m),
            };
            if bad {
                return domain(format!("sequence indices must lie in 1..={m}"));
            }
        }
        Ok(())
    }

    pub fn matrices(&self) -> &[ReplacementMatrix] {
        match self {
            Schedule::Periodic { matrices, .. } | Schedule::Sequence { matrices, .. } => matrices,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrices()[0].dim()
    }

    pub fn with_phase(self, phase: u64) -> Self {
        match self {
            Schedule::Periodic { matrices, .. } => {
                let p = matrices.len() as u64;
                Schedule::Periodic { matrices, phase: phase % p }
            }
            other => other,
        }
    }

    /// Index into `matrices()` used at draw `draw` (1-based).
    pub fn index_at(&self, draw: u64) -> usize {
        match self {
            Schedule::Periodic { matrices, phase } => ((draw - 1 + phase) % matrices.len() as u64) as usize,
            Schedule::Sequence { rule, .. } => rule.index(draw) - 1,
        }
    }

    pub fn matrix_at(&self, draw: u64) -> &ReplacementMatrix {
        &self.matrices()[self.index_at(draw)]
    }
}

/// Sequence schedule alternating A1/A2 along the shifted Thue-Morse sequence.
pub fn thue_morse_schedule(a1: ReplacementMatrix, a2: ReplacementMatrix) -> Result<Schedule> {
    if a1.dim() != a2.dim() {
        return domain("Thue-Morse matrices must have the same dimension");
    }
    Schedule::sequence(SequenceRule::ThueMorse, vec![a1, a2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    PolyaYoung { p: u64, sigma: Param, ell: Param },
    Triangular { p: u64, sigma: Param, ell1: Param, ell2: Param },
    MulticolorPy { p: u64, sigma: Param, ell: Param, colors: usize },
    BranchUrn { p: u64, alpha: Param, ell: Param, j: usize },
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UrnSpec {
    family: Family,
    schedule: Schedule,
    initial: Vec<Param>,
}

fn triangular_matrix(sigma: &Param, ell: &Param) -> ReplacementMatrix {
    let bottom = Param(sigma.exact() + ell.exact());
    ReplacementMatrix::new(vec![vec![sigma.clone(), ell.clone()], vec![Param::zero(), bottom]])
        .expect("2x2 matrix")
}

fn require_period(p: u64) -> Result<()> {
    if p < 1 {
        return domain("period p must be at least 1");
    }
    Ok(())
}

impl UrnSpec {
    /// Generalized Pólya-Young urn: diag(σ,σ) at draws 1..p−1 of each period, [[σ,ℓ],[0,σ+ℓ]] at draw p.
    pub fn polya_young(p: u64, sigma: Param, ell: Param, w0: Param, b0: Param) -> Result<Self> {
        require_period(p)?;
        if !sigma.is_positive() || ell.is_negative() {
            return domain("Pólya-Young urn needs σ > 0 and ℓ ≥ 0");
        }
        let mut matrices = vec![ReplacementMatrix::diagonal(2, &sigma); (p - 1) as usize];
        matrices.push(triangular_matrix(&sigma, &ell));
        let schedule = Schedule::periodic(matrices)?;
        Self::build(Family::PolyaYoung { p, sigma, ell }, schedule, vec![w0, b0])
    }

    /// Periodic triangular urn: [[σ,ℓ1],[0,σ+ℓ1]] at draws 1..p−1, [[σ,ℓ2],[0,σ+ℓ2]] at draw p.
    pub fn triangular(p: u64, sigma: Param, ell1: Param, ell2: Param, w0: Param, b0: Param) -> Result<Self> {
        require_period(p)?;
        if !sigma.is_positive() || ell1.is_negative() || ell2.is_negative() {
            return domain("triangular urn needs σ > 0 and ℓ1, ℓ2 ≥ 0");
        }
        let mut matrices = vec![triangular_matrix(&sigma, &ell1); (p - 1) as usize];
        matrices.push(triangular_matrix(&sigma, &ell2));
        let schedule = Schedule::periodic(matrices)?;
        Self::build(Family::Triangular { p, sigma, ell1, ell2 }, schedule, vec![w0, b0])
    }

    /// Pólya-Young urn with t colors; at draw p every row adds ℓ balls of the last color.
    pub fn multicolor_py(p: u64, sigma: Param, ell: Param, initial: Vec<Param>) -> Result<Self> {
        require_period(p)?;
        let t = initial.len();
        if t < 2 {
            return domain("multicolor urn needs at least two colors");
        }
        if !sigma.is_positive() || ell.is_negative() {
            return domain("multicolor urn needs σ > 0 and ℓ ≥ 0");
        }
        let mut matrices = vec![ReplacementMatrix::diagonal(t, &sigma); (p - 1) as usize];
        let mut last = ReplacementMatrix::diagonal(t, &sigma).entries;
        for row in last.iter_mut() {
            row[t - 1] = Param(row[t - 1].exact() + ell.exact());
        }
        matrices.push(ReplacementMatrix::new(last)?);
        let schedule = Schedule::periodic(matrices)?;
        Self::build(Family::MulticolorPy { p, sigma, ell, colors: t }, schedule, initial)
    }

    /// Branch urn with colors 0 (root), 1..=j (branches of that size) and j+1 (everything else).
    pub fn branch_urn(p: u64, alpha: Param, ell: Param, j: usize) -> Result<Self> {
        require_period(p)?;
        if j < 1 || !ell.is_positive() || alpha.is_negative() {
            return domain("branch urn needs j ≥ 1, ℓ > 0 and α ≥ 0");
        }
        let t = j + 2;
        let a = alpha.exact().clone();
        let one = ExactRational::one();
        let weight = |m: usize| ExactRational::from_integer((m as i64).into()) * (&a + &one) - &one;
        let mut base = vec![vec![ExactRational::zero(); t]; t];
        base[0][0] = one.clone();
        base[0][1] = a.clone();
        for m in 1..=j {
            base[m][m] = -weight(m);
            base[m][m + 1] = weight(m + 1);
        }
        base[t - 1][t - 1] = &a + &one;
        let to_matrix = |rows: &Vec<Vec<ExactRational>>| {
            ReplacementMatrix::new(rows.iter().map(|r| r.iter().cloned().map(Param).collect()).collect())
        };
        let mut last = base.clone();
        for row in last.iter_mut() {
            row[t - 1] += ell.exact();
        }
        let mut matrices = vec![to_matrix(&base)?; (p - 1) as usize];
        matrices.push(to_matrix(&last)?);
        let schedule = Schedule::periodic(matrices)?;
        let mut initial = vec![Param::zero(); t];
        initial[0] = ell.clone();
        Self::build(Family::BranchUrn { p, alpha, ell, j }, schedule, initial)
    }

    pub fn custom(schedule: Schedule, initial: Vec<Param>) -> Result<Self> {
        Self::build(Family::Custom, schedule, initial)
    }

    fn build(family: Family, schedule: Schedule, initial: Vec<Param>) -> Result<Self> {
        schedule.validate()?;
        if initial.len() != schedule.dim() {
            return domain(format!(
                "initial vector has {} entries but the schedule has {} colors",
                initial.len(),
                schedule.dim()
            ));
        }
        if initial.iter().any(Param::is_negative) {
            return domain("initial counts must be non-negative");
        }
        if !matches!(family, Family::BranchUrn { .. }) && !initial[0].is_positive() {
            return domain("initial white count w0 must be positive");
        }
        if matches!(family, Family::PolyaYoung { .. } | Family::Triangular { .. } | Family::MulticolorPy { .. }) {
            for m in schedule.matrices() {
                if m.balanced_total().is_none() {
                    return domain("family matrices must be balanced");
                }
            }
        }
        Ok(UrnSpec { family, schedule, initial })
    }

    /// Shift the periodic schedule so that draw i uses M_{((i−1+phase) mod p)+1}.
    pub fn with_phase(mut self, phase: u64) -> Self {
        self.schedule = self.schedule.with_phase(phase);
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn initial(&self) -> &[Param] {
        &self.initial
    }

    pub fn initial_f64(&self) -> Vec<f64> {
        self.initial.iter().map(Param::f64).collect()
    }

    pub fn colors(&self) -> usize {
        self.initial.len()
    }

    pub fn phase(&self) -> u64 {
        match &self.schedule {
            Schedule::Periodic { phase, .. } => *phase,
            Schedule::Sequence { .. } => 0,
        }
    }

    pub fn period(&self) -> Option<u64> {
        match &self.schedule {
            Schedule::Periodic { matrices, .. } => Some(matrices.len() as u64),
            Schedule::Sequence { .. } => None,
        }
    }

    /// Balance σ for the Pólya-Young-type families (white increment on a white draw).
    pub fn sigma(&self) -> Option<&Param> {
        match &self.family {
            Family::PolyaYoung { sigma, .. }
            | Family::Triangular { sigma, .. }
            | Family::MulticolorPy { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    pub fn initial_total(&self) -> ExactRational {
        self.initial.iter().fold(ExactRational::zero(), |acc, x| acc + x.exact())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(UrnSpecDoc::from(self)).expect("serializable spec")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: UrnSpecDoc = serde_json::from_value(value.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_spec()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: UrnSpecDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_spec()
    }
}

/// JSON document form of an [`UrnSpec`].
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct UrnSpecDoc {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Param>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<Param>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell1: Option<Param>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell2: Option<Param>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Param>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<Param>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
}

impl From<&UrnSpec> for UrnSpecDoc {
    fn from(spec: &UrnSpec) -> Self {
        let mut doc = UrnSpecDoc {
            initial: Some(spec.initial.clone()),
            colors: Some(spec.colors()),
            ..Default::default()
        };
        let phase = spec.phase();
        doc.phase = (phase != 0).then_some(phase);
        match &spec.family {
            Family::PolyaYoung { p, sigma, ell } => {
                doc.family = "polya_young".into();
                doc.p = Some(*p);
                doc.sigma = Some(sigma.clone());
                doc.ell = Some(ell.clone());
            }
            Family::Triangular { p, sigma, ell1, ell2 } => {
                doc.family = "triangular".into();
                doc.p = Some(*p);
                doc.sigma = Some(sigma.clone());
                doc.ell1 = Some(ell1.clone());
                doc.ell2 = Some(ell2.clone());
            }
            Family::MulticolorPy { p, sigma, ell, .. } => {
                doc.family = "multicolor_py".into();
                doc.p = Some(*p);
                doc.sigma = Some(sigma.clone());
                doc.ell = Some(ell.clone());
            }
            Family::BranchUrn { p, alpha, ell, j } => {
                doc.family = "branch_urn".into();
                doc.p = Some(*p);
                doc.alpha = Some(alpha.clone());
                doc.ell = Some(ell.clone());
                doc.j = Some(*j);
                doc.initial = None;
            }
            Family::Custom => {
                doc.family = "custom".into();
                doc.schedule = Some(match &spec.schedule {
                    Schedule::Periodic { matrices, .. } => Schedule::Periodic { matrices: matrices.clone(), phase: 0 },
                    s => s.clone(),
                });
            }
        }
        doc
    }
}

impl UrnSpecDoc {
    pub fn into_spec(self) -> Result<UrnSpec> {
        let need = |name: &str, v: Option<Param>| v.ok_or_else(|| Error::Parse(format!("missing field {name:?}")));
        let p = || self.p.ok_or_else(|| Error::Parse("missing field \"p\"".into()));
        let initial = || self.initial.clone().ok_or_else(|| Error::Parse("missing field \"initial\"".into()));
        let two = |v: Vec<Param>| -> Result<(Param, Param)> {
            match <[Param; 2]>::try_from(v) {
                Ok([w, b]) => Ok((w, b)),
                Err(v) => Err(Error::Parse(format!("two-color family needs 2 initial counts, got {}", v.len()))),
            }
        };
        let spec = match self.family.as_str() {
            "polya_young" | "py" => {
                let (w0, b0) = two(initial()?)?;
                UrnSpec::polya_young(p()?, need("sigma", self.sigma.clone())?, need("ell", self.ell.clone())?, w0, b0)?
            }
            "triangular" => {
                let (w0, b0) = two(initial()?)?;
                UrnSpec::triangular(
                    p()?,
                    need("sigma", self.sigma.clone())?,
                    need("ell1", self.ell1.clone())?,
                    need("ell2", self.ell2.clone())?,
                    w0,
                    b0,
                )?
            }
            "multicolor_py" => {
                UrnSpec::multicolor_py(p()?, need("sigma", self.sigma.clone())?, need("ell", self.ell.clone())?, initial()?)?
            }
            "branch_urn" => UrnSpec::branch_urn(
                p()?,
                need("alpha", self.alpha.clone())?,
                need("ell", self.ell.clone())?,
                self.j.ok_or_else(|| Error::Parse("missing field \"j\"".into()))?,
            )?,
            "custom" => {
                let schedule = self.schedule.clone().ok_or_else(|| Error::Parse("custom family needs \"schedule\"".into()))?;
                UrnSpec::custom(schedule, initial()?)?
            }
            other => return Err(Error::Parse(format!("unknown family {other:?}"))),
        };
        if let Some(c) = self.colors {
            if c != spec.colors() {
                return Err(Error::Parse(format!("colors = {c} but the spec has {} colors", spec.colors())));
            }
        }
        if let (Some(s), false) = (&self.schedule, matches!(spec.family, Family::Custom)) {
            if s.matrices() != spec.schedule.matrices() {
                return Err(Error::Parse("explicit schedule does not match the family definition".into()));
            }
        }
        Ok(match self.phase {
            Some(ph) => spec.with_phase(ph),
            None => spec,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrnState {
    pub time: u64,
    pub counts: Vec<f64>,
}

impl UrnState {
    pub fn initial(spec: &UrnSpec) -> Self {
        UrnState { time: 0, counts: spec.initial_f64() }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Exact total ball count T_N; requires every scheduled matrix to be balanced.
pub fn total_balls(spec: &UrnSpec, n: u64) -> Result<ExactRational> {
    let schedule = spec.schedule();
    let totals: Vec<ExactRational> = schedule
        .matrices()
        .iter()
        .map(|m| m.balanced_total().ok_or_else(|| Error::Unsupported("schedule has non-deterministic totals".into())))
        .collect::<Result<_>>()?;
    let mut acc = spec.initial_total();
    match schedule {
        Schedule::Periodic { matrices, .. } => {
            let p = matrices.len() as u64;
            let full = n / p;
            if full > 0 {
                let period: ExactRational = totals.iter().fold(ExactRational::zero(), |a, x| a + x);
                acc += period * ExactRational::from_integer(full.into());
            }
            for draw in full * p + 1..=n {
                acc += &totals[schedule.index_at(draw)];
            }
        }
        Schedule::Sequence { .. } => {
            for draw in 1..=n {
                acc += &totals[schedule.index_at(draw)];
            }
        }
    }
    Ok(acc)
}

pub fn total_balls_f64(spec: &UrnSpec, n: u64) -> Result<f64> {
    total_balls(spec, n).map(|q| q.to_f64().unwrap_or(f64::NAN))
}

/// Deterministic per-draw totals 1..=n as floats (T_0..T_n).
pub fn total_sequence_f64(spec: &UrnSpec, n: u64) -> Result<Vec<f64>> {
    let schedule = spec.schedule();
    let adds: Vec<f64> = schedule
        .matrices()
        .iter()
        .map(|m| {
            m.balanced_total()
                .map(|q| q.to_f64().unwrap_or(f64::NAN))
                .ok_or_else(|| Error::Unsupported("schedule has non-deterministic totals".into()))
        })
        .collect::<Result<_>>()?;
    let start: f64 = spec.initial_total().to_f64().unwrap_or(f64::NAN);
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(start);
    let mut t = start;
    for draw in 1..=n {
        t += adds[schedule.index_at(draw)];
        out.push(t);
    }
    Ok(out)
}

/// Index of the color selected by uniform `u` against `counts` (cumulative comparison in color order).
pub fn select_color(counts: &[f64], u: f64) -> usize {
    let total: f64 = counts.iter().sum();
    let target = u * total;
    let mut cum = 0.0;
    for (i, c) in counts.iter().enumerate() {
        cum += c;
        if target < cum {
            return i;
        }
    }
    // u·T can round up to T; fall back to the last color with positive count.
    counts.iter().rposition(|&c| c > 0.0).unwrap_or(0)
}

fn apply_row(counts: &mut [f64], row: &[f64], draw: u64) -> Result<()> {
    let scale = counts.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
    for (i, (c, a)) in counts.iter_mut().zip(row).enumerate() {
        *c += a;
        if *c < 0.0 {
            if *c < -1e-9 * scale {
                return Err(Error::Tenability { step: draw, color: i });
            }
            *c = 0.0;
        }
    }
    Ok(())
}

/// One draw with uniform variate `u ∈ [0,1)`.
pub fn step(spec: &UrnSpec, state: &UrnState, u: f64) -> Result<UrnState> {
    if !(0.0..1.0).contains(&u) {
        return domain(format!("uniform variate must lie in [0,1), got {u}"));
    }
    if state.counts.iter().any(|&c| c < 0.0) || state.total() <= 0.0 {
        return domain("urn state must have non-negative counts and a positive total");
    }
    let draw = state.time + 1;
    let color = select_color(&state.counts, u);
    let mut counts = state.counts.clone();
    apply_row(&mut counts, spec.schedule().matrix_at(draw).row(color), draw)?;
    Ok(UrnState { time: draw, counts })
}

/// Full trajectory of N draws, a deterministic function of `(spec, n, seed)`.
pub fn simulate(spec: &UrnSpec, n: u64, seed: u64) -> Result<Vec<UrnState>> {
    let mut rng = rng_from_seed(seed);
    let mut state = UrnState::initial(spec);
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(state.clone());
    for _ in 0..n {
        let u: f64 = rng.random();
        state = step(spec, &state, u)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Counts after N draws without storing the trajectory; consumes one uniform per draw from `rng`.
pub fn simulate_final(spec: &UrnSpec, n: u64, rng: &mut Rng) -> Result<Vec<f64>> {
    if spec.colors() == 2 {
        if let Some(plan) = TwoColorPlan::new(spec) {
            let (w, b) = plan.run(spec.initial[0].f64(), spec.initial[1].f64(), 0, n, rng);
            return Ok(vec![w, b]);
        }
    }
    let mut counts = spec.initial_f64();
    for draw in 1..=n {
        let u: f64 = rng.random();
        let color = select_color(&counts, u);
        apply_row(&mut counts, spec.schedule().matrix_at(draw).row(color), draw)?;
    }
    Ok(counts)
}

/// Precomputed per-phase increments for two-color periodic urns with non-negative entries.
#[derive(Clone, Debug)]
pub struct TwoColorPlan {
    white_on_white: Vec<f64>,
    white_on_black: Vec<f64>,
    black_on_white: Vec<f64>,
    black_on_black: Vec<f64>,
    phase: u64,
}

impl TwoColorPlan {
    pub fn new(spec: &UrnSpec) -> Option<Self> {
        let Schedule::Periodic { matrices, phase } = spec.schedule() else {
            return None;
        };
        if matrices.iter().any(|m| m.dim() != 2 || (0..2).any(|i| (0..2).any(|j| m.entry_f64(i, j) < 0.0))) {
            return None;
        }
        Some(TwoColorPlan {
            white_on_white: matrices.iter().map(|m| m.entry_f64(0, 0)).collect(),
            white_on_black: matrices.iter().map(|m| m.entry_f64(1, 0)).collect(),
            black_on_white: matrices.iter().map(|m| m.entry_f64(0, 1)).collect(),
            black_on_black: matrices.iter().map(|m| m.entry_f64(1, 1)).collect(),
            phase: *phase,
        })
    }

    /// Runs draws `from+1..=to` starting from counts `(w, b)` at time `from`.
    #[inline]
    pub fn run(&self, mut w: f64, mut b: f64, from: u64, to: u64, rng: &mut Rng) -> (f64, f64) {
        let p = self.white_on_white.len();
        let mut k = ((from + self.phase) % p as u64) as usize;
        for _ in from..to {
            let u: f64 = rng.random();
            if u * (w + b) < w {
                w += self.white_on_white[k];
                b += self.black_on_white[k];
            } else {
                w += self.white_on_black[k];
                b += self.black_on_black[k];
            }
            k += 1;
            if k == p {
                k = 0;
            }
        }
        (w, b)
    }
}

/// Probability mass function with sorted support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pmf<T> {
    pub support: Vec<T>,
    pub probabilities: Vec<T>,
}

impl Pmf<ExactRational> {
    pub fn to_f64(&self) -> Pmf<f64> {
        Pmf {
            support: self.support.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect(),
            probabilities: self.probabilities.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect(),
        }
    }

    pub fn mean(&self) -> ExactRational {
        self.support.iter().zip(&self.probabilities).fold(ExactRational::zero(), |acc, (x, q)| acc + x * q)
    }

    pub fn moment(&self, s: u32) -> ExactRational {
        self.support
            .iter()
            .zip(&self.probabilities)
            .fold(ExactRational::zero(), |acc, (x, q)| acc + num_traits::pow(x.clone(), s as usize) * q)
    }

    pub fn total(&self) -> ExactRational {
        self.probabilities.iter().fold(ExactRational::zero(), |a, q| a + q)
    }
}

impl Pmf<f64> {
    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probabilities).map(|(x, q)| x * q).sum()
    }

    pub fn total(&self) -> f64 {
        crate::rng::compensated_sum(self.probabilities.iter().copied())
    }

    /// Total-variation distance to an empirical histogram keyed by the same support values.
    pub fn tv_distance_to_counts(&self, values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mut hist: BTreeMap<i64, f64> = BTreeMap::new();
        let key = |x: f64| (x * 1e6).round() as i64;
        for &v in values {
            *hist.entry(key(v)).or_insert(0.0) += 1.0 / n;
        }
        let mut tv = 0.0;
        for (x, q) in self.support.iter().zip(&self.probabilities) {
            let emp = hist.remove(&key(*x)).unwrap_or(0.0);
            tv += (emp - q).abs();
        }
        tv += hist.values().sum::<f64>();
        tv / 2.0
    }
}

impl<T: std::fmt::Display> Pmf<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,probability\n");
        for (x, q) in self.support.iter().zip(&self.probabilities) {
            out.push_str(&format!("{x},{q}\n"));
        }
        out
    }
}

/// Description of a two-color urn whose white count is affine in the number of white draws:
/// draw i adds `a_i` white on a white draw and `c_i` white on a black draw with `a_i − c_i = δ`.
struct AffineWhite {
    delta: ExactRational,
    black_increment: Vec<ExactRational>,
}

fn affine_white(spec: &UrnSpec) -> Result<AffineWhite> {
    let unsupported = |m: &str| Err(Error::Unsupported(m.into()));
    if spec.colors() != 2 {
        return unsupported("exact PMF recursion needs a two-color urn");
    }
    let matrices = spec.schedule().matrices();
    let mut delta: Option<ExactRational> = None;
    let mut black_increment = Vec::with_capacity(matrices.len());
    for m in matrices {
        if m.balanced_total().is_none() {
            return unsupported("exact PMF recursion needs deterministic totals");
        }
        if (0..2).any(|i| (0..2).any(|j| m.entry(i, j) < &ExactRational::zero())) {
            return unsupported("exact PMF recursion needs non-negative replacement entries");
        }
        let d = m.entry(0, 0) - m.entry(1, 0);
        if d <= ExactRational::zero() {
            return unsupported("white increment on a white draw must exceed that on a black draw");
        }
        match &delta {
            Some(prev) if *prev != d => return unsupported("white-draw increment difference must be constant"),
            _ => delta = Some(d),
        }
        black_increment.push(m.entry(1, 0).clone());
    }
    Ok(AffineWhite { delta: delta.expect("non-empty schedule"), black_increment })
}

/// Exact PMF of the white count W_N by forward recursion over the number of white draws.
pub fn exact_pmf_dp(spec: &UrnSpec, n: u64) -> Result<Pmf<ExactRational>> {
    let plan = affine_white(spec)?;
    let schedule = spec.schedule();
    let w0 = spec.initial[0].exact().clone();
    let mut probs = vec![ExactRational::one()];
    let mut base = w0.clone();
    let mut total = spec.initial_total();
    for draw in 1..=n {
        let idx = schedule.index_at(draw);
        let mut next = vec![ExactRational::zero(); probs.len() + 1];
        for (k, q) in probs.iter().enumerate() {
            if q.is_zero() {
                continue;
            }
            let w = &base + &plan.delta * ExactRational::from_integer((k as i64).into());
            let pw = &w / &total;
            next[k + 1] += q * &pw;
            next[k] += q * (ExactRational::one() - pw);
        }
        base += &plan.black_increment[idx];
        total += schedule.matrices()[idx].balanced_total().expect("checked balanced");
        probs = next;
    }
    let support = (0..probs.len())
        .map(|k| &base + &plan.delta * ExactRational::from_integer((k as i64).into()))
        .collect();
    Ok(Pmf { support, probabilities: probs })
}

/// Floating-point version of [`exact_pmf_dp`] for large N.
pub fn pmf_dp_float(spec: &UrnSpec, n: u64) -> Result<Pmf<f64>> {
    let plan = affine_white(spec)?;
    let schedule = spec.schedule();
    let delta = plan.delta.to_f64().unwrap_or(f64::NAN);
    let black: Vec<f64> = plan.black_increment.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
    let totals = total_sequence_f64(spec, n)?;
    let mut probs = vec![1.0];
    let mut base = spec.initial[0].f64();
    for draw in 1..=n {
        let total = totals[draw as usize - 1];
        let mut next = vec![0.0; probs.len() + 1];
        for (k, q) in probs.iter().enumerate() {
            let pw = (base + delta * k as f64) / total;
            next[k + 1] += q * pw;
            next[k] += q * (1.0 - pw);
        }
        base += black[schedule.index_at(draw)];
        probs = next;
    }
    let support = (0..probs.len()).map(|k| base + delta * k as f64).collect();
    Ok(Pmf { support, probabilities: probs })
}

/// Joint law of the full color-count vector.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPmf {
    pub outcomes: Vec<(Vec<ExactRational>, ExactRational)>,
}

impl JointPmf {
    pub fn marginal(&self, color: usize) -> Pmf<ExactRational> {
        let mut acc: BTreeMap<ExactRational, ExactRational> = BTreeMap::new();
        for (counts, q) in &self.outcomes {
            *acc.entry(counts[color].clone()).or_insert_with(ExactRational::zero) += q;
        }
        let (support, probabilities) = acc.into_iter().unzip();
        Pmf { support, probabilities }
    }

    pub fn expectation(&self, f: impl Fn(&[ExactRational]) -> ExactRational) -> ExactRational {
        self.outcomes.iter().fold(ExactRational::zero(), |acc, (c, q)| acc + f(c) * q)
    }

    pub fn total(&self) -> ExactRational {
        self.outcomes.iter().fold(ExactRational::zero(), |acc, (_, q)| acc + q)
    }
}

pub const HISTORY_BUDGET: u128 = 10_000_000;

/// Exact counts after adding the scheduled row for `color` at `draw`.
pub fn apply_row_exact(spec: &UrnSpec, counts: &[ExactRational], draw: u64, color: usize) -> Result<Vec<ExactRational>> {
    let m = spec.schedule().matrix_at(draw);
    let out: Vec<ExactRational> = counts.iter().enumerate().map(|(j, c)| c + m.entry(color, j)).collect();
    if let Some(j) = out.iter().position(|c| c < &ExactRational::zero()) {
        return Err(Error::Tenability { step: draw, color: j });
    }
    Ok(out)
}

/// Depth-first walk over every color history of length ≤ N.
///
/// The visitor receives `(history, counts, probability)` for every prefix, including the empty one.
pub fn visit_histories<F>(spec: &UrnSpec, n: u64, mut visitor: F) -> Result<()>
where
    F: FnMut(&[usize], &[ExactRational], &ExactRational),
{
    let t = spec.colors() as u128;
    let paths = (0..n).try_fold(1u128, |acc, _| acc.checked_mul(t)).unwrap_or(u128::MAX);
    if paths > HISTORY_BUDGET {
        return Err(Error::Budget(paths));
    }
    let counts: Vec<ExactRational> = spec.initial.iter().map(|x| x.exact().clone()).collect();
    let mut history = Vec::with_capacity(n as usize);
    walk(spec, n, &mut history, &counts, &ExactRational::one(), &mut visitor)
}

fn walk<F>(
    spec: &UrnSpec,
    n: u64,
    history: &mut Vec<usize>,
    counts: &[ExactRational],
    prob: &ExactRational,
    visitor: &mut F,
) -> Result<()>
where
    F: FnMut(&[usize], &[ExactRational], &ExactRational),
{
    visitor(history, counts, prob);
    if history.len() as u64 == n {
        return Ok(());
    }
    let total: ExactRational = counts.iter().fold(ExactRational::zero(), |a, c| a + c);
    let draw = history.len() as u64 + 1;
    for (color, c) in counts.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let next = apply_row_exact(spec, counts, draw, color)?;
        let q = prob * c / &total;
        history.push(color);
        walk(spec, n, history, &next, &q, visitor)?;
        history.pop();
    }
    Ok(())
}

/// Exhaustive law of the color-count vector after N draws.
pub fn enumerate_histories(spec: &UrnSpec, n: u64) -> Result<JointPmf> {
    let mut acc: BTreeMap<Vec<ExactRational>, ExactRational> = BTreeMap::new();
    visit_histories(spec, n, |h, counts, q| {
        if h.len() as u64 == n {
            *acc.entry(counts.to_vec()).or_insert_with(ExactRational::zero) += q;
        }
    })?;
    Ok(JointPmf { outcomes: acc.into_iter().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> ExactRational {
        ExactRational::new(n.into(), d.into())
    }

    fn example() -> UrnSpec {
        UrnSpec::polya_young(2, 1.into(), 1.into(), 1.into(), 1.into()).unwrap()
    }

    #[test]
    fn total_balls_examples() {
        let spec = example();
        assert_eq!(total_balls(&spec, 3).unwrap(), q(6, 1));
        assert_eq!(total_balls(&spec, 0).unwrap(), q(2, 1));
        let tri = UrnSpec::triangular(2, 1.into(), 1.into(), 3.into(), 1.into(), 1.into()).unwrap();
        assert_eq!(total_balls(&tri, 2).unwrap(), q(8, 1));
    }

    #[test]
    fn total_balls_closed_forms() {
        // T_N = n(pσ+ℓ)+kσ+w0+b0 and T_N = Nσ1 + n(ℓ2−ℓ1) + w0 + b0.
        let py = UrnSpec::polya_young(3, Param::ratio(1, 2), Param::ratio(1, 3), 1.into(), 2.into()).unwrap();
        let tri = UrnSpec::triangular(3, Param::ratio(1, 2), 1.into(), Param::ratio(5, 2), 1.into(), 2.into()).unwrap();
        for n in 0..40i64 {
            let (blocks, k) = (n / 3, n % 3);
            let py_closed = q(blocks, 1) * (q(3, 2) + q(1, 3)) + q(k, 2) + q(3, 1);
            assert_eq!(total_balls(&py, n as u64).unwrap(), py_closed);
            let tri_closed = q(n, 1) * q(3, 2) + q(blocks, 1) * q(3, 2) + q(3, 1);
            assert_eq!(total_balls(&tri, n as u64).unwrap(), tri_closed);
        }
    }

    #[test]
    fn unbalanced_custom_totals_unsupported() {
        let m = ReplacementMatrix::from_i64(&[&[1, 0], &[0, 2]]).unwrap();
        let spec = UrnSpec::custom(Schedule::periodic(vec![m]).unwrap(), vec![1.into(), 1.into()]).unwrap();
        assert!(matches!(total_balls(&spec, 3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn step_examples() {
        let spec = example();
        let s0 = UrnState::initial(&spec);
        let s1 = step(&spec, &s0, 0.2).unwrap();
        assert_eq!(s1, UrnState { time: 1, counts: vec![2.0, 1.0] });
        assert_eq!(step(&spec, &s0, 0.9).unwrap(), UrnState { time: 1, counts: vec![1.0, 2.0] });
        assert_eq!(step(&spec, &s1, 0.99).unwrap(), UrnState { time: 2, counts: vec![2.0, 3.0] });
        assert!(step(&spec, &s0, 1.0).is_err());
        assert!(step(&spec, &s0, -0.1).is_err());
    }

    #[test]
    fn simulate_is_deterministic() {
        let spec = example();
        let a = simulate(&spec, 4, 7).unwrap();
        assert_eq!(a, simulate(&spec, 4, 7).unwrap());
        assert_eq!(a.len(), 5);
        assert_eq!(simulate(&spec, 0, 3).unwrap(), vec![UrnState::initial(&spec)]);
        for s in &a {
            assert_eq!(s.total(), total_balls_f64(&spec, s.time).unwrap());
        }
    }

    #[test]
    fn simulate_final_matches_generic_path() {
        let spec = UrnSpec::polya_young(3, 1.into(), 2.into(), 1.into(), 1.into()).unwrap().with_phase(1);
        let mut rng = rng_from_seed(11);
        let fast = simulate_final(&spec, 200, &mut rng).unwrap();
        let slow = simulate(&spec, 200, 11).unwrap();
        assert_eq!(fast, slow.last().unwrap().counts);
    }

    #[test]
    fn dp_examples() {
        let spec = example();
        let one = exact_pmf_dp(&spec, 1).unwrap();
        assert_eq!(one.support, vec![q(1, 1), q(2, 1)]);
        assert_eq!(one.probabilities, vec![q(1, 2), q(1, 2)]);
        let two = exact_pmf_dp(&spec, 2).unwrap();
        assert_eq!(two.support, vec![q(1, 1), q(2, 1), q(3, 1)]);
        assert_eq!(two.probabilities, vec![q(1, 3), q(1, 3), q(1, 3)]);
        assert_eq!(two.mean(), q(2, 1));
        let joint = enumerate_histories(&spec, 2).unwrap();
        assert_eq!(joint.marginal(0), two);
    }

    #[test]
    fn dp_matches_enumeration() {
        for p in 1..=3 {
            for sigma in [Param::integer(1), Param::ratio(1, 2)] {
                for ell in [Param::integer(1), Param::integer(2), Param::ratio(1, 3)] {
                    let spec = UrnSpec::polya_young(p, sigma.clone(), ell.clone(), 1.into(), 1.into()).unwrap();
                    for n in 0..=8 {
                        let dp = exact_pmf_dp(&spec, n).unwrap();
                        let en = enumerate_histories(&spec, n).unwrap().marginal(0);
                        let dp_pos = Pmf {
                            support: dp.support.iter().zip(&dp.probabilities).filter(|(_, q)| !q.is_zero()).map(|(x, _)| x.clone()).collect(),
                            probabilities: dp.probabilities.iter().filter(|q| !q.is_zero()).cloned().collect(),
                        };
                        assert_eq!(dp_pos, en, "p={p} σ={sigma} ℓ={ell} N={n}");
                        assert_eq!(dp.total(), ExactRational::one());
                    }
                }
            }
        }
    }

    #[test]
    fn float_dp_tracks_exact() {
        let spec = UrnSpec::triangular(3, 1.into(), Param::ratio(1, 2), 2.into(), 1.into(), 2.into()).unwrap();
        let exact = exact_pmf_dp(&spec, 25).unwrap().to_f64();
        let float = pmf_dp_float(&spec, 25).unwrap();
        assert_eq!(exact.support, float.support);
        for (a, b) in exact.probabilities.iter().zip(&float.probabilities) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn multicolor_enumeration_normalized() {
        let spec = UrnSpec::multicolor_py(2, 1.into(), 1.into(), vec![1.into(), 1.into(), 1.into()]).unwrap();
        let joint = enumerate_histories(&spec, 2).unwrap();
        assert_eq!(joint.total(), ExactRational::one());
        assert!(matches!(enumerate_histories(&spec, 20), Err(Error::Budget(_))));
    }

    #[test]
    fn thue_morse_indices() {
        let a1 = ReplacementMatrix::from_i64(&[&[1, 0], &[0, 1]]).unwrap();
        let a2 = ReplacementMatrix::from_i64(&[&[1, 1], &[0, 2]]).unwrap();
        let s = thue_morse_schedule(a1.clone(), a2.clone()).unwrap();
        let b: Vec<usize> = (1..=8).map(|n| s.index_at(n) + 1).collect();
        assert_eq!(b, vec![2, 2, 1, 2, 1, 1, 2, 2]);
        let periodic = Schedule::periodic(vec![a1.clone()]).unwrap();
        let constant = Schedule::sequence(SequenceRule::Constant(1), vec![a1.clone(), a2.clone()]).unwrap();
        for n in 1..50 {
            assert_eq!(periodic.matrix_at(n), constant.matrix_at(n));
        }
        let bad = ReplacementMatrix::from_i64(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]).unwrap();
        assert!(thue_morse_schedule(a1, bad).is_err());
    }

    #[test]
    fn phase_shifts_schedule() {
        let spec = UrnSpec::polya_young(3, 1.into(), 1.into(), 1.into(), 1.into()).unwrap();
        let shifted = spec.clone().with_phase(2);
        assert_eq!(spec.schedule().index_at(3), 2);
        assert_eq!(shifted.schedule().index_at(1), 2);
        assert_eq!(total_balls(&shifted, 1).unwrap(), q(4, 1));
    }

    #[test]
    fn branch_urn_shape_and_tenability() {
        let spec = UrnSpec::branch_urn(2, 1.into(), 1.into(), 3).unwrap();
        assert_eq!(spec.colors(), 5);
        let m = spec.schedule().matrix_at(1);
        assert_eq!(m.row(0), &[1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, -1.0, 3.0, 0.0, 0.0]);
        assert_eq!(m.row(3), &[0.0, 0.0, 0.0, -5.0, 7.0]);
        assert_eq!(spec.schedule().matrix_at(2).row(4), &[0.0, 0.0, 0.0, 0.0, 3.0]);
        for r in 0..5 {
            assert_eq!(m.balanced_total().unwrap(), q(2, 1), "row {r}");
        }
        let joint = enumerate_histories(&spec, 6).unwrap();
        assert_eq!(joint.total(), ExactRational::one());
        // removing from an empty color is rejected
        let bad = ReplacementMatrix::from_i64(&[&[1, -2], &[0, 1]]).unwrap();
        let spec = UrnSpec::custom(Schedule::periodic(vec![bad]).unwrap(), vec![1.into(), 0.into()]).unwrap();
        assert!(matches!(simulate(&spec, 3, 1), Err(Error::Tenability { .. })));
    }

    #[test]
    fn json_round_trip() {
        let specs = vec![
            example(),
            UrnSpec::triangular(2, 1.into(), 1.into(), 3.into(), 1.into(), Param::ratio(1, 2)).unwrap(),
            UrnSpec::multicolor_py(2, 1.into(), 1.into(), vec![1.into(), 1.into(), 1.into()]).unwrap(),
            UrnSpec::branch_urn(4, 1.into(), 1.into(), 2).unwrap(),
            UrnSpec::custom(
                thue_morse_schedule(
                    ReplacementMatrix::from_i64(&[&[1, 0], &[0, 1]]).unwrap(),
                    ReplacementMatrix::from_i64(&[&[1, 1], &[0, 2]]).unwrap(),
                )
                .unwrap(),
                vec![1.into(), 1.into()],
            )
            .unwrap(),
            example().with_phase(1),
        ];
        for spec in specs {
            let json = spec.to_json();
            assert_eq!(UrnSpec::from_json(&json).unwrap(), spec, "{json}");
        }
        let text = r#"{"family":"polya_young","p":2,"sigma":1,"ell":"1/3","initial":[1,1]}"#;
        let spec = UrnSpec::from_json_str(text).unwrap();
        assert_eq!(spec.family(), &Family::PolyaYoung { p: 2, sigma: 1.into(), ell: Param::ratio(1, 3) });
        assert!(UrnSpec::from_json_str(r#"{"family":"polya_young","p":2}"#).is_err());
        assert!(UrnSpec::from_json_str(r#"{"family":"nope"}"#).is_err());
    }
}
