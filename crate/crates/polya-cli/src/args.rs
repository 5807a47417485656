//! Flags of every subcommand. Each struct doubles as its JSON config layer.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use polya::Param;

fn param(text: &str) -> Result<Param, String> {
    Param::parse(text).map_err(|e| e.to_string())
}

fn params(text: &str) -> Result<Vec<Param>, String> {
    text.split(',').map(|t| param(t.trim())).collect()
}

fn grid(text: &str) -> Result<Vec<u64>, String> {
    text.split(',').map(|t| t.trim().parse::<u64>().map_err(|e| format!("{t:?}: {e}"))).collect()
}

#[derive(Parser, Debug)]
#[command(name = "polya", version, about = "Periodic Pólya urns, limit laws and the growth processes they drive")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate urn replicates or a single trajectory.
    UrnSim(UrnSimArgs),
    /// Exact finite-N moments, PMF or normalizer g_N.
    UrnExact(UrnExactArgs),
    /// Limit moments μ_s, the limit density and the law decomposition.
    UrnLimit(UrnLimitArgs),
    /// Martingale tail-sum CLT experiment and LIL diagnostic.
    TailSum(TailSumArgs),
    /// Grow an increasing forest with periodic immigration.
    TreeSim(TreeSimArgs),
    /// Periodic d-Stirling permutations: sample, count, enumerate, parse.
    Stirling(StirlingArgs),
    /// Chinese restaurant process with competing restaurants.
    Crp(CrpArgs),
    /// Run a verifier and emit its report.
    Verify(VerifyArgs),
    /// Asymptotic constants ψ, Λ, κ of an urn.
    Constants(ConstantsArgs),
}

/// Flags shared by all subcommands.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct CommonArgs {
    /// JSON config file, or an earlier output of this tool (its embedded config is reused).
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub output: Option<std::path::PathBuf>,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// exact, float or auto.
    #[arg(long)]
    pub mode: Option<String>,
    /// Master seed; defaults to $POLYA_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap for replicate loops. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Urn specification flags; they override the fields of a `spec` object from the config.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct UrnArgs {
    /// JSON UrnSpec file (schemas/urn_spec.schema.json).
    #[arg(long = "spec")]
    pub spec_file: Option<std::path::PathBuf>,
    /// py (polya_young), triangular, multicolor_py, branch_urn.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub p: Option<u64>,
    #[arg(long, value_parser = param)]
    pub sigma: Option<Param>,
    #[arg(long, value_parser = param)]
    pub ell: Option<Param>,
    #[arg(long, value_parser = param)]
    pub ell1: Option<Param>,
    #[arg(long, value_parser = param)]
    pub ell2: Option<Param>,
    #[arg(long, value_parser = param)]
    pub alpha: Option<Param>,
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long, value_parser = param)]
    pub w0: Option<Param>,
    #[arg(long, value_parser = param)]
    pub b0: Option<Param>,
    /// Comma-separated initial counts, e.g. 1,1,1.
    #[arg(long, value_parser = params)]
    pub initial: Option<Vec<Param>>,
    #[arg(long)]
    pub phase: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct UrnSimArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub urn: UrnArgs,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Emit the full path of one replicate instead of final counts.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trajectory: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct UrnExactArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub urn: UrnArgs,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    /// Highest moment order s.
    #[arg(long)]
    pub moments: Option<u32>,
    /// raw, rising, pmf, g-factor or mixed.
    #[arg(long)]
    pub quantity: Option<String>,
    /// Exponents for mixed rising moments, one per non-final color.
    #[arg(long, value_delimiter = ',')]
    pub exponents: Option<Vec<u32>>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct UrnLimitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub urn: UrnArgs,
    #[arg(long)]
    pub smax: Option<u32>,
    /// Tabulate the limit density on (0, xmax] instead of the moments.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub density: Option<bool>,
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct TailSumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub urn: UrnArgs,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[arg(long = "N-far")]
    #[serde(rename = "N_far")]
    pub n_far: Option<u64>,
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Per-replicate (M_N, M_far, bracket) rows instead of the summary.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub samples: Option<bool>,
    /// Run the LIL diagnostic on this comma-separated grid of N values.
    #[arg(long, value_parser = grid)]
    pub lil_grid: Option<Vec<u64>>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct TreeArgs {
    /// recursive, dary or gport.
    #[arg(long)]
    pub tree: Option<String>,
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long = "tree-alpha", value_parser = param)]
    pub tree_alpha: Option<Param>,
    #[arg(long = "tree-p")]
    pub tree_p: Option<u64>,
    #[arg(long = "tree-ell", value_parser = param)]
    pub tree_ell: Option<Param>,
    /// standard or crp.
    #[arg(long)]
    pub offset: Option<String>,
    #[arg(long, value_parser = param)]
    pub bar: Option<Param>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct TreeSimArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeArgs,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    /// parent, bracket, profile or statistic.
    #[arg(long)]
    pub view: Option<String>,
    /// descendants, root-descendants or outdegree (with --view statistic).
    #[arg(long)]
    pub statistic: Option<String>,
    #[arg(long)]
    pub index: Option<u64>,
    #[arg(long)]
    pub replicates: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct StirlingArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long)]
    pub p: Option<u64>,
    #[arg(long)]
    pub t: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    /// random, count, enumerate or parse.
    #[arg(long)]
    pub action: Option<String>,
    /// Permutation text for --action parse, thick symbols marked with `!`.
    #[arg(long)]
    pub perm: Option<String>,
    #[arg(long)]
    pub replicates: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct CrpArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = param)]
    pub a: Option<Param>,
    #[arg(long, value_parser = param)]
    pub theta: Option<Param>,
    #[arg(long)]
    pub p: Option<u64>,
    #[arg(long = "theta-bar", value_parser = param)]
    pub theta_bar: Option<Param>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Exact table-count distribution instead of simulation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub exact: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub urn: UrnArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeArgs,
    /// decomposition, martingale, descendants, root-descendants, outdegree, branch, blocks, crp or bijection.
    #[arg(long)]
    pub what: Option<String>,
    /// gamma-product, local-time or all.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub smax: Option<u32>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[arg(long)]
    pub index: Option<u64>,
    #[arg(long)]
    pub replicates: Option<u64>,
    #[arg(long = "stirling-d")]
    pub stirling_d: Option<u32>,
    #[arg(long = "stirling-t")]
    pub stirling_t: Option<u32>,
    #[arg(long = "crp-a", value_parser = param)]
    pub crp_a: Option<Param>,
    #[arg(long = "crp-theta", value_parser = param)]
    pub crp_theta: Option<Param>,
    #[arg(long = "crp-theta-bar", value_parser = param)]
    pub crp_theta_bar: Option<Param>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstantsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub urn: UrnArgs,
}
