use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;
use serde_json::{json, Value};

use polya::format::Mode;
use polya::growth::crp::{simulate_crp, table_count_pmf, verify_crp_tree_equivalence, CrpParams};
use polya::growth::stirling::{
    enumerate_stirling, insertion_places, perm_to_tree, random_stirling, stirling_count, tree_to_perm,
    verify_block_count_law, PeriodicStirlingPerm,
};
use polya::growth::tree::{
    verify_branch_profile, verify_descendants_law, verify_outdegree_law, verify_root_descendants_law, Forest,
    ForestConfig, OffsetMode, TreeFamily, TvReport,
};
use polya::laws::{decomposition_law, verify_decomposition, verify_decompositions, DecompositionCase};
use polya::martingale::{
    first_martingale_mean_failure, lil_diagnostic, tail_sum_report, tail_sum_samples, verify_martingale_prefixes,
    NormalityStats, TailSumExperiment,
};
use polya::moments::{
    asymptotic_constants, g_factor, limit_density, limit_moments, mixed_rising_moments, raw_moments,
    rising_factorial_moment, MomentValue,
};
use polya::rng::{rng_from_seed, run_replicates, sample_moments};
use polya::urn::{exact_pmf_dp, pmf_dp_float, simulate, simulate_final, UrnSpec};
use polya::{ExactRational, Param};

use crate::args::*;
use crate::config::{resolve, resolve_spec, Resolved};
use crate::output::{fmt_float, fmt_rational, num15, Format, Report, Table};
use crate::CliError;

pub struct Outcome {
    pub report: Report,
    pub format: Format,
    pub output: Option<std::path::PathBuf>,
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn value<T: Clone>(field: &Option<T>, name: &str) -> Result<T, CliError> {
    field.clone().ok_or_else(|| CliError::Usage(format!("missing value for {name}")))
}

/// `auto` picks `fallback`.
fn mode(common: &CommonArgs, fallback: Mode) -> Result<Mode, CliError> {
    match common.mode.as_deref().unwrap_or("auto") {
        "auto" => Ok(fallback),
        other => other.parse().map_err(|_| CliError::Usage(format!("unknown mode {other:?}; expected exact, float or auto"))),
    }
}

fn finish<T>(
    command: &'static str,
    resolved: Resolved<T>,
    common: &CommonArgs,
    table: Option<Table>,
    result: Value,
) -> Result<Outcome, CliError> {
    let format = Format::parse(common.format.as_deref().unwrap_or("csv"))?;
    let seed = resolved.seed();
    Ok(Outcome {
        report: Report { command, config: resolved.config, seed, table, result },
        format,
        output: common.output.clone(),
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn render_moment(v: &MomentValue) -> String {
    v.render()
}

/// Common denominator of every count the urn can reach.
fn lattice(spec: &UrnSpec) -> BigInt {
    let mut d = BigInt::one();
    for q in spec.initial() {
        d = d.lcm(q.exact().denom());
    }
    for m in spec.schedule().matrices() {
        for row in m.entries() {
            for q in row {
                d = d.lcm(q.exact().denom());
            }
        }
    }
    d
}

fn fmt_count(x: f64, denom: &BigInt, mode: Mode) -> String {
    match mode {
        Mode::Float => fmt_float(x),
        Mode::Exact => {
            let scaled = polya::special::rational_from_f64(x).expect("finite count") * ExactRational::from_integer(denom.clone());
            fmt_rational(&(scaled.round() / ExactRational::from_integer(denom.clone())), Mode::Exact)
        }
    }
}

pub fn urn_sim(args: UrnSimArgs) -> Result<Outcome, CliError> {
    let mut r = resolve(&args, &args.common, json!({"N": 100, "replicates": 1, "trajectory": false, "mode": "auto"}))?;
    let spec = resolve_spec(&mut r.config, &r.args.urn)?;
    let a = r.args.clone();
    let (n, reps) = (value(&a.n, "--N")?, value(&a.replicates, "--replicates")?);
    let mode = mode(&a.common, Mode::Float)?;
    let denom = lattice(&spec);
    let colors: Vec<String> = (0..spec.colors()).map(|c| format!("color_{c}")).collect();
    let seed = r.seed();
    if a.trajectory == Some(true) {
        let path = simulate(&spec, n, seed)?;
        let mut columns = vec!["step".to_string()];
        columns.extend(colors);
        columns.push("total".into());
        let mut table = Table::with_columns(columns);
        for state in &path {
            let mut row = vec![state.time.to_string()];
            row.extend(state.counts.iter().map(|&c| fmt_count(c, &denom, mode)));
            row.push(fmt_count(state.total(), &denom, mode));
            table.push(row);
        }
        let last = path.last().expect("initial state").counts.clone();
        return finish("urn-sim", r, &a.common, Some(table), json!({"N": n, "final": last}));
    }
    let finals = run_replicates(reps, seed, a.common.threads, |rng, _| simulate_final(&spec, n, rng))
        .into_iter()
        .collect::<polya::Result<Vec<_>>>()?;
    let mut columns = vec!["replicate".to_string()];
    columns.extend(colors);
    let mut table = Table::with_columns(columns);
    for (i, counts) in finals.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(counts.iter().map(|&c| fmt_count(c, &denom, mode)));
        table.push(row);
    }
    let means: Vec<Value> = (0..spec.colors())
        .map(|c| num15(finals.iter().map(|f| f[c]).sum::<f64>() / finals.len() as f64))
        .collect();
    finish("urn-sim", r, &a.common, Some(table), json!({"N": n, "replicates": reps, "mean": means}))
}

pub fn urn_exact(args: UrnExactArgs) -> Result<Outcome, CliError> {
    let mut r = resolve(&args, &args.common, json!({"N": 10, "moments": 3, "quantity": "raw", "mode": "auto"}))?;
    let spec = resolve_spec(&mut r.config, &r.args.urn)?;
    let a = r.args.clone();
    let n = value(&a.n, "--N")?;
    let mode = mode(&a.common, Mode::auto(n))?;
    let s_max = value(&a.moments, "--moments")?;
    let quantity = value(&a.quantity, "--quantity")?;
    let mut table;
    match quantity.as_str() {
        "raw" => {
            table = Table::new(&["s", "moment"]);
            let seq = raw_moments(&spec, n, s_max, mode)?;
            for (s, v) in seq.values.iter().enumerate().skip(1) {
                table.push(vec![s.to_string(), render_moment(v)]);
            }
        }
        "rising" => {
            table = Table::new(&["s", "rising_moment"]);
            for s in 1..=s_max {
                table.push(vec![s.to_string(), render_moment(&rising_factorial_moment(&spec, n, s, mode)?)]);
            }
        }
        "pmf" => {
            table = Table::new(&["value", "probability"]);
            match mode {
                Mode::Exact => {
                    let pmf = exact_pmf_dp(&spec, n)?;
                    for (x, q) in pmf.support.iter().zip(&pmf.probabilities) {
                        table.push(vec![fmt_rational(x, mode), fmt_rational(q, mode)]);
                    }
                }
                Mode::Float => {
                    let pmf = pmf_dp_float(&spec, n)?;
                    for (x, q) in pmf.support.iter().zip(&pmf.probabilities) {
                        table.push(vec![fmt_float(*x), fmt_float(*q)]);
                    }
                }
            }
        }
        "g-factor" => {
            table = Table::new(&["N", "g"]);
            table.push(vec![n.to_string(), render_moment(&g_factor(&spec, n, mode)?)]);
        }
        "mixed" => {
            let exps = value(&a.exponents, "--exponents")?;
            table = Table::new(&["exponents", "mixed_rising_moment"]);
            let label = exps.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            table.push(vec![label, render_moment(&mixed_rising_moments(&spec, n, &exps, mode)?)]);
        }
        other => return usage(format!("unknown quantity {other:?}; expected raw, rising, pmf, g-factor or mixed")),
    }
    let mode_name = if mode == Mode::Exact { "exact" } else { "float" };
    finish("urn-exact", r, &a.common, Some(table), json!({"N": n, "quantity": quantity, "mode": mode_name}))
}

pub fn urn_limit(args: UrnLimitArgs) -> Result<Outcome, CliError> {
    let defaults = json!({"smax": 6, "density": false, "xmax": 6.0, "points": 60, "tol": 1e-12, "mode": "auto"});
    let mut r = resolve(&args, &args.common, defaults)?;
    let spec = resolve_spec(&mut r.config, &r.args.urn)?;
    let a = r.args.clone();
    let c = asymptotic_constants(&spec)?;
    let mut laws = serde_json::Map::new();
    for (name, case) in [("gamma_product", DecompositionCase::GammaProduct), ("local_time", DecompositionCase::LocalTime)] {
        let entry = match decomposition_law(&spec, case) {
            Ok((law, scale)) => json!({"law": law.name(), "predicted_scale": num15(scale)}),
            Err(e) => json!({"unavailable": e.to_string()}),
        };
        laws.insert(name.into(), entry);
    }
    let result = json!({"psi": num15(c.psi), "lambda": num15(c.lambda), "kappa": num15(c.kappa), "decomposition": laws});
    let table = if a.density == Some(true) {
        let (xmax, points, tol) = (value(&a.xmax, "--xmax")?, value(&a.points, "--points")?, value(&a.tol, "--tol")?);
        if !(xmax > 0.0) || points == 0 {
            return Err(polya::Error::Domain("density grid needs xmax > 0 and points ≥ 1".into()).into());
        }
        let mut t = Table::new(&["x", "density"]);
        for k in 1..=points {
            let x = xmax * k as f64 / points as f64;
            t.push(vec![fmt_float(x), fmt_float(limit_density(&spec, x, tol)?)]);
        }
        t
    } else {
        let mut t = Table::new(&["s", "mu"]);
        let seq = limit_moments(&spec, value(&a.smax, "--smax")?)?;
        for (s, v) in seq.values.iter().enumerate() {
            t.push(vec![s.to_string(), fmt_float(v.to_f64())]);
        }
        t
    };
    finish("urn-limit", r, &a.common, Some(table), result)
}

fn normality_row(name: &str, z: &NormalityStats) -> Vec<String> {
    vec![
        name.into(),
        fmt_float(z.mean),
        fmt_float(z.variance),
        fmt_float(z.skewness),
        fmt_float(z.excess_kurtosis),
        fmt_float(z.jarque_bera),
    ]
}

pub fn tail_sum(args: TailSumArgs) -> Result<Outcome, CliError> {
    let defaults = json!({"N": 1000, "N_far": 16000, "replicates": 10000, "samples": false});
    let mut r = resolve(&args, &args.common, defaults)?;
    let spec = resolve_spec(&mut r.config, &r.args.urn)?;
    let a = r.args.clone();
    let (n, n_far, reps) = (value(&a.n, "--N")?, value(&a.n_far, "--N-far")?, value(&a.replicates, "--replicates")?);
    let seed = r.seed();
    if let Some(grid) = &a.lil_grid {
        let lil = lil_diagnostic(&spec, grid, n_far, reps, seed, a.common.threads)?;
        let mut t = Table::new(&["N", "s_N", "log_log", "skipped", "median_running_max", "mean_running_max"]);
        for row in &lil.rows {
            t.push(vec![
                row.n.to_string(),
                fmt_float(row.s_n),
                fmt_float(row.log_log),
                row.skipped.to_string(),
                fmt_float(row.median_running_max),
                fmt_float(row.mean_running_max),
            ]);
        }
        let result = json!({"N_far": n_far, "replicates": reps, "diagnostic": "lil"});
        return finish("tail-sum", r, &a.common, Some(t), result);
    }
    let exp = TailSumExperiment::new(&spec, n, n_far, reps, seed)?;
    let samples = tail_sum_samples(&exp, a.common.threads)?;
    let report = tail_sum_report(&exp, &samples)?;
    let table = if a.samples == Some(true) {
        let mut t = Table::new(&["replicate", "M_N", "M_far", "quadratic_variation"]);
        for (i, s) in samples.iter().enumerate() {
            t.push(vec![i.to_string(), fmt_float(s.m_n), fmt_float(s.m_far), fmt_float(s.quadratic_variation)]);
        }
        t
    } else {
        let mut t = Table::new(&["statistic", "mean", "variance", "skewness", "excess_kurtosis", "jarque_bera"]);
        t.push(normality_row("z", &report.z));
        t.push(normality_row("z_window", &report.z_window));
        t.push(normality_row("z_self_normalized", &report.z_self_normalized));
        t
    };
    let result = serde_json::to_value(&report).expect("report serializes");
    finish("tail-sum", r, &a.common, Some(table), result)
}

fn forest_config(t: &TreeArgs) -> Result<ForestConfig, CliError> {
    let family = match value(&t.tree, "--tree")?.as_str() {
        "recursive" => TreeFamily::Recursive,
        "dary" | "d-ary" => TreeFamily::DAry { d: value(&t.d, "--d")? },
        "gport" => TreeFamily::Gport { alpha: value(&t.tree_alpha, "--tree-alpha")? },
        other => return usage(format!("unknown tree family {other:?}; expected recursive, dary or gport")),
    };
    let offset: OffsetMode = value(&t.offset, "--offset")?.parse()?;
    let config = ForestConfig::new(family, value(&t.tree_p, "--tree-p")?, value(&t.tree_ell, "--tree-ell")?, offset);
    let config = match &t.bar {
        Some(beta) => config.with_bar(beta.clone()),
        None => config,
    };
    config.validate()?;
    Ok(config)
}

fn tree_defaults() -> serde_json::Map<String, Value> {
    let Value::Object(map) = json!({
        "tree": "recursive", "d": 2, "tree_alpha": 1, "tree_p": 2, "tree_ell": 1, "offset": "standard",
    }) else {
        unreachable!()
    };
    map
}

fn with_tree_defaults(mut v: Value) -> Value {
    v.as_object_mut().expect("object").extend(tree_defaults());
    v
}

fn tree_statistic(forest: &Forest, statistic: &str, index: u64) -> polya::Result<u64> {
    match statistic {
        "descendants" => forest.descendants(index),
        "root-descendants" => forest.root_descendants(index as usize),
        "outdegree" => forest.outdegree(index),
        other => Err(polya::Error::Parse(format!(
            "unknown statistic {other:?}; expected descendants, root-descendants or outdegree"
        ))),
    }
}

pub fn tree_sim(args: TreeSimArgs) -> Result<Outcome, CliError> {
    let defaults = with_tree_defaults(json!({"N": 20, "view": "parent", "statistic": "descendants", "index": 1, "replicates": 1000}));
    let r = resolve(&args, &args.common, defaults)?;
    let a = r.args.clone();
    let config = forest_config(&a.tree)?;
    let n = value(&a.n, "--N")?;
    let seed = r.seed();
    let view = value(&a.view, "--view")?;
    if view == "statistic" {
        let (statistic, index, reps) = (value(&a.statistic, "--statistic")?, value(&a.index, "--index")?, value(&a.replicates, "--replicates")?);
        let values = run_replicates(reps, seed, a.common.threads, |rng, _| {
            Forest::grown(config.clone(), n, rng).and_then(|f| tree_statistic(&f, &statistic, index))
        })
        .into_iter()
        .collect::<polya::Result<Vec<u64>>>()?;
        let mut t = Table::new(&["replicate", "value"]);
        for (i, v) in values.iter().enumerate() {
            t.push(vec![i.to_string(), v.to_string()]);
        }
        let m = sample_moments(&values.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let result = json!({"statistic": statistic, "index": index, "mean": num15(m.mean), "variance": num15(m.variance)});
        return finish("tree-sim", r, &a.common, Some(t), result);
    }
    let forest = Forest::grown(config.clone(), n, &mut rng_from_seed(seed))?;
    forest.check_invariants()?;
    let result = json!({
        "N": n,
        "family": config.family.name(),
        "immigrant_roots": forest.immigrant_roots().len(),
        "connectivity": fmt_rational(&config.connectivity_at(n), Mode::Exact),
        "bracket": forest.to_bracket_string(),
    });
    let table = match view.as_str() {
        "parent" => {
            let csv = forest.to_parent_csv();
            let mut lines = csv.lines();
            let header: Vec<String> = lines.next().unwrap_or_default().split(',').map(String::from).collect();
            let mut t = Table::with_columns(header);
            for line in lines {
                t.push(line.split(',').map(String::from).collect());
            }
            t
        }
        "bracket" => {
            let mut t = Table::new(&["forest"]);
            t.push(vec![forest.to_bracket_string()]);
            t
        }
        "profile" => {
            let mut t = Table::new(&["branch_size", "branches"]);
            for (size, &count) in forest.branch_profile().iter().enumerate() {
                if count > 0 {
                    t.push(vec![size.to_string(), count.to_string()]);
                }
            }
            t
        }
        other => return usage(format!("unknown view {other:?}; expected parent, bracket, profile or statistic")),
    };
    finish("tree-sim", r, &a.common, Some(table), result)
}

pub fn stirling(args: StirlingArgs) -> Result<Outcome, CliError> {
    let defaults = json!({"d": 2, "p": 2, "t": 1, "N": 5, "action": "random", "replicates": 1});
    let r = resolve(&args, &args.common, defaults)?;
    let a = r.args.clone();
    let (d, p, t, n) = (value(&a.d, "--d")?, value(&a.p, "--p")?, value(&a.t, "--t")?, value(&a.n, "--N")?);
    let seed = r.seed();
    let action = value(&a.action, "--action")?;
    let describe = |perm: &PeriodicStirlingPerm| vec![perm.to_text(), perm.block_count().to_string()];
    let (table, result) = match action.as_str() {
        "random" => {
            let reps = value(&a.replicates, "--replicates")?;
            let perms = run_replicates(reps, seed, a.common.threads, |rng, _| random_stirling(d, p, t, n, rng))
                .into_iter()
                .collect::<polya::Result<Vec<_>>>()?;
            let mut tab = Table::new(&["replicate", "permutation", "blocks"]);
            for (i, perm) in perms.iter().enumerate() {
                let mut row = vec![i.to_string()];
                row.extend(describe(perm));
                tab.push(row);
            }
            let tree = perm_to_tree(&perms[0])?.to_bracket_string();
            (tab, json!({"N": n, "first_tree": tree}))
        }
        "count" => {
            let mut tab = Table::new(&["N", "count", "insertion_places"]);
            for k in 0..=n {
                tab.push(vec![k.to_string(), stirling_count(d, p, t, k).to_string(), insertion_places(d, p, t, k).to_string()]);
            }
            (tab, json!({"count": stirling_count(d, p, t, n).to_string()}))
        }
        "enumerate" => {
            let perms = enumerate_stirling(d, p, t, n)?;
            let mut tab = Table::new(&["permutation", "blocks"]);
            for perm in &perms {
                tab.push(describe(perm));
            }
            (tab, json!({"N": n, "count": perms.len()}))
        }
        "parse" => {
            let perm = PeriodicStirlingPerm::parse(&value(&a.perm, "--perm")?, d, p, t)?;
            let forest = perm_to_tree(&perm)?;
            if tree_to_perm(&forest)? != perm {
                return Err(polya::Error::Domain("bijection round trip failed".into()).into());
            }
            let mut tab = Table::new(&["start", "symbols", "head", "listed_size"]);
            for b in perm.blocks() {
                tab.push(vec![b.start.to_string(), b.symbols.to_string(), b.head.to_string(), b.listed_size.to_string()]);
            }
            (tab, json!({"permutation": perm.to_text(), "N": perm.order(), "tree": forest.to_bracket_string()}))
        }
        other => return usage(format!("unknown action {other:?}; expected random, count, enumerate or parse")),
    };
    finish("stirling", r, &a.common, Some(table), result)
}

fn crp_params(a: &Param, theta: &Param, p: u64, bar: &Option<Param>) -> Result<CrpParams, CliError> {
    let params = CrpParams::new(a.clone(), theta.clone(), p);
    let params = match bar {
        Some(t2) => params.with_bar(t2.clone()),
        None => params,
    };
    params.validate()?;
    Ok(params)
}

pub fn crp(args: CrpArgs) -> Result<Outcome, CliError> {
    let defaults = json!({"a": "1/2", "theta": "1/2", "p": 2, "N": 20, "replicates": 1, "exact": false, "mode": "auto"});
    let r = resolve(&args, &args.common, defaults)?;
    let a = r.args.clone();
    let params = crp_params(&value(&a.a, "--a")?, &value(&a.theta, "--theta")?, value(&a.p, "--p")?, &a.theta_bar)?;
    let n = value(&a.n, "--N")?;
    let seed = r.seed();
    if a.exact == Some(true) {
        let mode = mode(&a.common, Mode::Exact)?;
        let pmf = table_count_pmf(&params, n)?;
        let mut t = Table::new(&["tables", "probability"]);
        for (k, q) in pmf.support.iter().zip(&pmf.probabilities) {
            t.push(vec![fmt_rational(k, Mode::Exact), fmt_rational(q, mode)]);
        }
        return finish("crp", r, &a.common, Some(t), json!({"N": n, "mean_tables": num15(pmf.to_f64().mean())}));
    }
    let reps = value(&a.replicates, "--replicates")?;
    if reps == 1 {
        let state = simulate_crp(params, n, &mut rng_from_seed(seed))?;
        let mut t = Table::new(&["restaurant", "table", "size"]);
        for (ri, tables) in state.restaurants.iter().enumerate() {
            for (ti, size) in tables.iter().enumerate() {
                t.push(vec![ri.to_string(), ti.to_string(), size.to_string()]);
            }
        }
        if let Some(bar) = state.bar {
            t.push(vec!["bar".into(), "0".into(), bar.to_string()]);
        }
        let result = json!({"N": n, "tables": state.tables(), "opened": state.opened(), "first_table": state.first_table_size()});
        return finish("crp", r, &a.common, Some(t), result);
    }
    let stats = run_replicates(reps, seed, a.common.threads, |rng, _| {
        simulate_crp(params.clone(), n, rng).map(|s| (s.tables(), s.first_table_size()))
    })
    .into_iter()
    .collect::<polya::Result<Vec<_>>>()?;
    let mut t = Table::new(&["replicate", "tables", "first_table"]);
    for (i, (k, f)) in stats.iter().enumerate() {
        t.push(vec![i.to_string(), k.to_string(), f.to_string()]);
    }
    let mean = stats.iter().map(|s| s.0 as f64).sum::<f64>() / stats.len() as f64;
    finish("crp", r, &a.common, Some(t), json!({"N": n, "replicates": reps, "mean_tables": num15(mean)}))
}

fn tv_table(report: &TvReport) -> Table {
    let mut t = Table::new(&["value", "exact_probability"]);
    for (x, q) in report.exact_pmf.support.iter().zip(&report.exact_pmf.probabilities) {
        t.push(vec![fmt_float(*x), fmt_float(*q)]);
    }
    t
}

pub fn verify(args: VerifyArgs) -> Result<Outcome, CliError> {
    let defaults = with_tree_defaults(json!({
        "what": "decomposition", "case": "all", "smax": 6, "N": 30, "index": 1, "replicates": 10000,
        "stirling_d": 2, "stirling_t": 1, "crp_a": "1/2", "crp_theta": "1/2", "format": "json",
    }));
    let mut r = resolve(&args, &args.common, defaults)?;
    let a = r.args.clone();
    let what = value(&a.what, "--what")?;
    let (n, reps, index) = (value(&a.n, "--N")?, value(&a.replicates, "--replicates")?, value(&a.index, "--index")?);
    let seed = r.seed();
    let threads = a.common.threads;
    let (table, result): (Option<Table>, Value) = match what.as_str() {
        "decomposition" => {
            let spec = resolve_spec(&mut r.config, &a.urn)?;
            let smax = value(&a.smax, "--smax")?;
            let reports = match value(&a.case, "--case")?.as_str() {
                "all" => verify_decompositions(&spec, smax)?,
                "gamma-product" => vec![verify_decomposition(&spec, DecompositionCase::GammaProduct, smax)?],
                "local-time" => vec![verify_decomposition(&spec, DecompositionCase::LocalTime, smax)?],
                other => return usage(format!("unknown case {other:?}; expected gamma-product, local-time or all")),
            };
            let mut t = Table::new(&["case", "s", "target", "fitted", "relative_residual", "fitted_scale", "printed_scale"]);
            for rep in &reports {
                let case = serde_json::to_value(rep.case).expect("case").as_str().unwrap_or_default().to_string();
                for row in &rep.rows {
                    t.push(vec![
                        case.clone(),
                        row.s.to_string(),
                        fmt_float(row.target),
                        fmt_float(row.fitted),
                        fmt_float(row.relative_residual),
                        fmt_float(rep.fitted_scale),
                        fmt_float(rep.printed_scale),
                    ]);
                }
            }
            (Some(t), json!({"reports": to_json(&reports)}))
        }
        "martingale" => {
            let spec = resolve_spec(&mut r.config, &a.urn)?;
            let failure = first_martingale_mean_failure(&spec, n)?;
            let prefixes = verify_martingale_prefixes(&spec, n.min(8))?;
            (None, json!({"N_max": n, "first_failure": failure, "prefixes_checked": prefixes, "prefix_depth": n.min(8), "pass": failure.is_none()}))
        }
        "descendants" | "root-descendants" | "outdegree" => {
            let config = forest_config(&a.tree)?;
            let report = match what.as_str() {
                "descendants" => verify_descendants_law(&config, n, index, reps, seed, threads)?,
                "root-descendants" => verify_root_descendants_law(&config, n, index, reps, seed, threads)?,
                _ => verify_outdegree_law(&config, n, index, reps, seed, threads)?,
            };
            (Some(tv_table(&report)), to_json(&report))
        }
        "branch" => {
            let t_args = &a.tree;
            let report = verify_branch_profile(
                value(&t_args.tree_alpha, "--tree-alpha")?,
                value(&t_args.tree_p, "--tree-p")?,
                value(&t_args.tree_ell, "--tree-ell")?,
                n,
                index as usize,
                reps,
                seed,
                threads,
            )?;
            let mut t = Table::new(&["size", "tree_mean", "tree_se", "urn_mean", "urn_se", "z"]);
            for row in &report.rows {
                t.push(vec![
                    row.size.to_string(),
                    fmt_float(row.tree_mean),
                    fmt_float(row.tree_se),
                    fmt_float(row.urn_mean),
                    fmt_float(row.urn_se),
                    fmt_float(row.z),
                ]);
            }
            (Some(t), to_json(&report))
        }
        "blocks" => {
            let report = verify_block_count_law(
                value(&a.stirling_d, "--stirling-d")?,
                value(&a.tree.tree_p, "--tree-p")?,
                value(&a.stirling_t, "--stirling-t")?,
                n,
                reps,
                seed,
                threads,
            )?;
            (None, to_json(&report))
        }
        "crp" => {
            let params = crp_params(
                &value(&a.crp_a, "--crp-a")?,
                &value(&a.crp_theta, "--crp-theta")?,
                value(&a.tree.tree_p, "--tree-p")?,
                &a.crp_theta_bar,
            )?;
            (None, to_json(&verify_crp_tree_equivalence(&params, n, reps, seed, threads)?))
        }
        "bijection" => {
            let (d, p, t) = (value(&a.stirling_d, "--stirling-d")?, value(&a.tree.tree_p, "--tree-p")?, value(&a.stirling_t, "--stirling-t")?);
            let ok = run_replicates(reps, seed, threads, |rng, i| -> polya::Result<bool> {
                let perm = random_stirling(d, p, t, 1 + i % n.max(1), rng)?;
                Ok(tree_to_perm(&perm_to_tree(&perm)?)? == perm)
            })
            .into_iter()
            .collect::<polya::Result<Vec<bool>>>()?;
            let passed = ok.iter().filter(|&&b| b).count();
            (None, json!({"checked": reps, "round_trips": passed, "max_N": n, "pass": passed as u64 == reps}))
        }
        other => {
            return usage(format!(
                "unknown verifier {other:?}; expected decomposition, martingale, descendants, root-descendants, outdegree, branch, blocks, crp or bijection"
            ))
        }
    };
    finish("verify", r, &a.common, table, result)
}

pub fn constants(args: ConstantsArgs) -> Result<Outcome, CliError> {
    let mut r = resolve(&args, &args.common, json!({"format": "json", "mode": "auto"}))?;
    let spec = resolve_spec(&mut r.config, &r.args.urn)?;
    let a = r.args.clone();
    let c = asymptotic_constants(&spec)?;
    let mut result = json!({"psi": num15(c.psi), "lambda": num15(c.lambda), "kappa": num15(c.kappa), "family": c.family});
    if let Some(s1) = c.sigma1 {
        result["sigma1"] = num15(s1);
    }
    finish("constants", r, &a.common, None, result)
}
