//! Python bindings. Urns are passed as UrnSpec JSON strings; structured results come back as JSON.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use polya::format::{format_exact, Mode};
use polya::growth::crp::{simulate_crp, table_count_pmf, CrpParams};
use polya::growth::stirling::{random_stirling, stirling_count, PeriodicStirlingPerm};
use polya::growth::tree::{Forest, ForestConfig, OffsetMode, TreeFamily};
use polya::martingale::{tail_sum_clt_experiment, TailSumExperiment};
use polya::moments::{self, MomentValue};
use polya::rng::rng_from_seed;
use polya::urn::{self, UrnSpec};
use polya::{Error, Param};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Domain(_) | Error::Malformed { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn spec(json: &str) -> PyResult<UrnSpec> {
    UrnSpec::from_json_str(json).map_err(py_err)
}

fn param(text: &str) -> PyResult<Param> {
    Param::parse(text).map_err(py_err)
}

fn mode(exact: bool) -> Mode {
    if exact {
        Mode::Exact
    } else {
        Mode::Float
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Canonical JSON of a spec, after validation.
#[pyfunction]
fn normalize_spec(spec_json: &str) -> PyResult<String> {
    Ok(spec(spec_json)?.to_json().to_string())
}

/// ψ, Λ and κ as JSON.
#[pyfunction]
fn constants(spec_json: &str) -> PyResult<String> {
    to_json(&moments::asymptotic_constants(&spec(spec_json)?).map_err(py_err)?)
}

/// E[(W_N/σ)^(s)]: "num/den" when exact, else a decimal string.
#[pyfunction]
#[pyo3(signature = (spec_json, n, s, exact = true))]
fn rising_moment(spec_json: &str, n: u64, s: u32, exact: bool) -> PyResult<String> {
    Ok(moments::rising_factorial_moment(&spec(spec_json)?, n, s, mode(exact)).map_err(py_err)?.render())
}

/// E[W_N^s] for s = 0..=s_max.
#[pyfunction]
#[pyo3(signature = (spec_json, n, s_max, exact = true))]
fn raw_moments(spec_json: &str, n: u64, s_max: u32, exact: bool) -> PyResult<Vec<String>> {
    let seq = moments::raw_moments(&spec(spec_json)?, n, s_max, mode(exact)).map_err(py_err)?;
    Ok(seq.values.iter().map(MomentValue::render).collect())
}

/// Exact law of W_N as (value, probability) pairs of "num/den" strings.
#[pyfunction]
fn pmf(spec_json: &str, n: u64) -> PyResult<Vec<(String, String)>> {
    let pmf = urn::exact_pmf_dp(&spec(spec_json)?, n).map_err(py_err)?;
    Ok(pmf.support.iter().zip(&pmf.probabilities).map(|(x, q)| (format_exact(x), format_exact(q))).collect())
}

/// μ_s = E[W^s] of the limit law for s = 0..=s_max.
#[pyfunction]
fn limit_moments(spec_json: &str, s_max: u32) -> PyResult<Vec<f64>> {
    Ok(moments::limit_moments(&spec(spec_json)?, s_max).map_err(py_err)?.floats())
}

#[pyfunction]
#[pyo3(signature = (spec_json, x, tol = 1e-12))]
fn limit_density(spec_json: &str, x: f64, tol: f64) -> PyResult<f64> {
    moments::limit_density(&spec(spec_json)?, x, tol).map_err(py_err)
}

/// Final color counts of one replicate.
#[pyfunction]
fn simulate(spec_json: &str, n: u64, seed: u64) -> PyResult<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    urn::simulate_final(&spec(spec_json)?, n, &mut rng).map_err(py_err)
}

/// Tail-sum CLT report as JSON.
#[pyfunction]
#[pyo3(signature = (spec_json, n, n_far, replicates, seed, threads = None))]
fn tail_sum(spec_json: &str, n: u64, n_far: u64, replicates: u64, seed: u64, threads: Option<usize>) -> PyResult<String> {
    let exp = TailSumExperiment::new(&spec(spec_json)?, n, n_far, replicates, seed).map_err(py_err)?;
    to_json(&tail_sum_clt_experiment(&exp, threads).map_err(py_err)?)
}

/// Grows a forest and returns it as JSON. `family` is recursive, dary or gport.
#[pyfunction]
#[pyo3(signature = (family, p, ell, n, seed, d = 2, alpha = "1", offset = "standard", bar = None))]
#[allow(clippy::too_many_arguments)]
fn grow_forest(
    family: &str,
    p: u64,
    ell: &str,
    n: u64,
    seed: u64,
    d: u32,
    alpha: &str,
    offset: &str,
    bar: Option<&str>,
) -> PyResult<String> {
    let family = match family {
        "recursive" => TreeFamily::Recursive,
        "dary" => TreeFamily::DAry { d },
        "gport" => TreeFamily::Gport { alpha: param(alpha)? },
        other => return Err(PyValueError::new_err(format!("unknown tree family {other:?}"))),
    };
    let offset: OffsetMode = offset.parse().map_err(py_err)?;
    let mut config = ForestConfig::new(family, p, param(ell)?, offset);
    if let Some(b) = bar {
        config = config.with_bar(param(b)?);
    }
    let forest = Forest::grown(config, n, &mut rng_from_seed(seed)).map_err(py_err)?;
    to_json(&forest)
}

/// Number of periodic d-Stirling permutations of order n, as a decimal string.
#[pyfunction]
fn stirling_number(d: u32, p: u64, t: u32, n: u64) -> String {
    stirling_count(d, p, t, n).to_string()
}

/// A uniform random permutation in text form, thick symbols marked with `!`.
#[pyfunction]
fn stirling_sample(d: u32, p: u64, t: u32, n: u64, seed: u64) -> PyResult<String> {
    Ok(random_stirling(d, p, t, n, &mut rng_from_seed(seed)).map_err(py_err)?.to_text())
}

/// Block count of a permutation given in text form.
#[pyfunction]
fn stirling_blocks(text: &str, d: u32, p: u64, t: u32) -> PyResult<usize> {
    Ok(PeriodicStirlingPerm::parse(text, d, p, t).map_err(py_err)?.block_count())
}

fn crp_params(a: &str, theta: &str, p: u64, theta_bar: Option<&str>) -> PyResult<CrpParams> {
    let mut params = CrpParams::new(param(a)?, param(theta)?, p);
    if let Some(tb) = theta_bar {
        params = params.with_bar(param(tb)?);
    }
    params.validate().map_err(py_err)?;
    Ok(params)
}

/// Seating after n customers as JSON.
#[pyfunction]
#[pyo3(signature = (a, theta, p, n, seed, theta_bar = None))]
fn crp(a: &str, theta: &str, p: u64, n: u64, seed: u64, theta_bar: Option<&str>) -> PyResult<String> {
    let params = crp_params(a, theta, p, theta_bar)?;
    to_json(&simulate_crp(params, n, &mut rng_from_seed(seed)).map_err(py_err)?)
}

/// Exact law of the total table count as (count, probability) pairs.
#[pyfunction]
#[pyo3(signature = (a, theta, p, n, theta_bar = None))]
fn crp_table_pmf(a: &str, theta: &str, p: u64, n: u64, theta_bar: Option<&str>) -> PyResult<Vec<(String, String)>> {
    let pmf = table_count_pmf(&crp_params(a, theta, p, theta_bar)?, n).map_err(py_err)?;
    Ok(pmf.support.iter().zip(&pmf.probabilities).map(|(x, q)| (format_exact(x), format_exact(q))).collect())
}

#[pymodule]
fn polya_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", polya::VERSION)?;
    m.add_function(wrap_pyfunction!(normalize_spec, m)?)?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(rising_moment, m)?)?;
    m.add_function(wrap_pyfunction!(raw_moments, m)?)?;
    m.add_function(wrap_pyfunction!(pmf, m)?)?;
    m.add_function(wrap_pyfunction!(limit_moments, m)?)?;
    m.add_function(wrap_pyfunction!(limit_density, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(tail_sum, m)?)?;
    m.add_function(wrap_pyfunction!(grow_forest, m)?)?;
    m.add_function(wrap_pyfunction!(stirling_number, m)?)?;
    m.add_function(wrap_pyfunction!(stirling_sample, m)?)?;
    m.add_function(wrap_pyfunction!(stirling_blocks, m)?)?;
    m.add_function(wrap_pyfunction!(crp, m)?)?;
    m.add_function(wrap_pyfunction!(crp_table_pmf, m)?)?;
    Ok(())
}
