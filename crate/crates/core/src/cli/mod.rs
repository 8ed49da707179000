//! The `qmed` command line: argument parsing, configuration merging, and
//! emission of JSON, CSV and SVG artifacts.

mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::data::{fmt_num, Dataset, NumericTable};
use crate::diagnostics::{bh_fdr, cauchy_combination_checked, gof_test, screen, sensitivity_curve};
use crate::error::QmedError;
use crate::estimands::{estimand_curve, EstimandQuery};
use crate::estimation::{fit, FitSpec, MarginalSpec};
use crate::gsem::{DagParams, GsemModel};
use crate::marginal::Family;
use crate::mediation::{run_tests, AbConfig, Method};
use crate::rng::data_stream;
use crate::sim::{run_mixture_null_study, run_mse_study, run_null_study, run_power_study, sample_gsem, NullCase, PowerGrid, SimScenario, StudyReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] QmedError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for usage errors, 1 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Flag values are checked before any work starts, so invalid arguments
/// surface as usage errors.
fn checked<T>(r: crate::error::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| usage(e.to_string()))
}

#[derive(Debug, Parser)]
#[command(name = "qmed", version, about = "Quantile mediation analysis with Gaussian-copula structural equation models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Directory receiving every output file
    #[arg(long, global = true, default_value = "qmed-out")]
    pub output: PathBuf,
    /// TOML file with default settings; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write the fully resolved run configuration to manifest.json
    #[arg(long, global = true)]
    pub manifest: bool,
    /// Worker threads for bootstraps and studies [default: all cores]
    #[arg(long, global = true, env = "QMED_JOBS")]
    pub jobs: Option<usize>,
    /// Artifact formats to write
    #[arg(long, global = true, value_delimiter = ',', default_value = "json,csv,svg")]
    pub emit: Vec<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a dataset and report parameters and diagnostics
    Fit(FitArgs),
    /// Evaluate the direct, indirect and total effects over quantile levels
    Estimate(EstimateArgs),
    /// Test for a zero indirect effect
    Test(TestArgs),
    /// Draw a dataset from the simulation design
    Simulate(SimulateArgs),
    /// Monte Carlo studies of size, power and estimation error
    #[command(subcommand)]
    Study(StudyCommand),
    /// Indirect effect as a function of the mediator-outcome error correlation
    Sensitivity(SensitivityArgs),
    /// Goodness-of-fit test of the Gaussian copula
    Gof(GofArgs),
    /// Combine p-values into one
    Combine(CombineArgs),
    /// Benjamini-Hochberg selection
    Fdr(FdrArgs),
    /// Test every candidate mediator of a table and select at a false discovery rate
    Screen(ScreenArgs),
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Size under fixed null configurations
    Null(NullArgs),
    /// Size under randomly drawn null configurations
    Mixture(MixtureArgs),
    /// Rejection rates over a grid of alternatives
    Power(PowerArgs),
    /// Estimation error of the plug-in effects over sample sizes
    Mse(MseArgs),
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Family of the exposure margin (normal, exponential, gamma) [default: normal]
    #[arg(long)]
    pub family_s: Option<Family>,
    /// Family of the mediator margin [default: normal]
    #[arg(long)]
    pub family_m: Option<Family>,
    /// Family of the outcome margin [default: exponential]
    #[arg(long)]
    pub family_y: Option<Family>,
}

#[derive(Debug, Args, Default)]
pub struct QueryArgs {
    /// Quantile level [default: 0.5]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Baseline exposure [default: 0]
    #[arg(long)]
    pub s: Option<f64>,
    /// Comparison exposure [default: 1]
    #[arg(long)]
    pub s_prime: Option<f64>,
    /// Covariate profile, intercept first [default: 1,0,...,0]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Args, Default)]
pub struct BootArgs {
    /// Pretest threshold multiplier [default: 2]
    #[arg(long)]
    pub lambda_scale: Option<f64>,
    /// Nominal level [default: 0.05]
    #[arg(long)]
    pub omega: Option<f64>,
    /// Seed for all randomness [default: 2024]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Center the bootstrap path statistics at the full-data estimates [default: true]
    #[arg(long)]
    pub centered_z: Option<bool>,
    /// Local drift constant of the exposure-mediator path [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub b_alpha: Option<f64>,
    /// Local drift constant of the mediator-outcome path [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub b_beta: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    /// Sample size [default: 300]
    #[arg(long)]
    pub n: Option<usize>,
    /// Exposure-mediator path [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_s: Option<f64>,
    /// Mediator-outcome path [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub beta_m: Option<f64>,
    /// Direct path [default: 0.5]
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV with columns S, M, Y, X1..Xp
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "model_json"])))]
pub struct EstimateArgs {
    /// Dataset CSV to fit before evaluating the effects
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Fitted or hypothesized model as JSON
    #[arg(long = "model", value_name = "JSON")]
    pub model_json: Option<PathBuf>,
    /// Quantile levels as start:end:step, e.g. 0.1:0.9:0.1 [default: the single level --tau]
    #[arg(long, conflicts_with = "tau")]
    pub tau_grid: Option<String>,
    #[command(flatten)]
    pub families: ModelArgs,
    #[command(flatten)]
    pub query: QueryArgs,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Dataset CSV with columns S, M, Y, X1..Xp
    #[arg(long)]
    pub input: PathBuf,
    /// Methods (qma-ab, qma-b, poc-b, poc-ym, js-b, js-ym, or all)
    #[arg(long, value_delimiter = ',', default_value = "qma-ab")]
    pub method: Vec<String>,
    /// Bootstrap replicates [default: 500]
    #[arg(long = "B", value_name = "B")]
    pub replicates: Option<usize>,
    /// Also write the bootstrap statistics to statistics.csv
    #[arg(long)]
    pub statistics: bool,
    #[command(flatten)]
    pub families: ModelArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub boot: BootArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Seed for all randomness [default: 2024]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Replications [default: 500]
    #[arg(long = "R", value_name = "R")]
    pub replications: Option<usize>,
    /// Bootstrap replicates per replication [default: 300]
    #[arg(long = "B", value_name = "B")]
    pub replicates: Option<usize>,
    /// Methods to compare [default: all]
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub boot: BootArgs,
}

#[derive(Debug, Args)]
pub struct NullArgs {
    /// Null configurations (omega01, omega02, omega03) [default: all three]
    #[arg(long, value_delimiter = ',')]
    pub case: Option<Vec<NullCase>>,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct MixtureArgs {
    /// Probabilities of the three null configurations
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.05,0.9")]
    pub probs: Vec<f64>,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// Equal paths growing together
    Equal,
    /// Fixed product of the paths with a varying ratio
    Product,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long, value_enum, default_value = "equal")]
    pub grid: GridKind,
    /// Path values of the equal grid
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2")]
    pub values: Vec<f64>,
    /// Path product of the product grid
    #[arg(long, default_value_t = 0.04)]
    pub product: f64,
    /// Path ratios of the product grid
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
    pub ratios: Vec<f64>,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct MseArgs {
    /// Sample sizes; ratios are relative to the first
    #[arg(long, value_delimiter = ',', default_value = "200,400,800")]
    pub ns: Vec<usize>,
    /// Path configurations as alpha:beta pairs
    #[arg(long, value_delimiter = ',', default_value = "0:0,0:0.5,0.5:0,0.5:0.5")]
    pub paths: Vec<String>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Replications [default: 500]
    #[arg(long = "R", value_name = "R")]
    pub replications: Option<usize>,
    /// Seed for all randomness [default: 2024]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub query: QueryArgs,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Error correlations as start:end:step [default: -0.9:0.9:0.01]
    #[arg(long, allow_hyphen_values = true)]
    pub rho_grid: Option<String>,
    #[command(flatten)]
    pub families: ModelArgs,
    #[command(flatten)]
    pub query: QueryArgs,
}

#[derive(Debug, Args)]
pub struct GofArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Cross-validation folds [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Parametric bootstrap replicates [default: 200]
    #[arg(long = "B", value_name = "B")]
    pub replicates: Option<usize>,
    /// Seed for all randomness [default: 2024]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub families: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMethod {
    Cauchy,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("pvalues").required(true).args(["p", "input"])))]
pub struct PValueArgs {
    /// p-values as a comma list
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    /// CSV with a p_value column (or a single column)
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    #[arg(long, value_enum, default_value = "cauchy")]
    pub method: CombineMethod,
    #[command(flatten)]
    pub pvalues: PValueArgs,
}

#[derive(Debug, Args)]
pub struct FdrArgs {
    /// Target false discovery rate
    #[arg(long, default_value_t = 0.1)]
    pub q: f64,
    #[command(flatten)]
    pub pvalues: PValueArgs,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// CSV with columns S, Y, X1..Xp and one column per candidate mediator
    #[arg(long)]
    pub input: PathBuf,
    /// Target false discovery rate
    #[arg(long)]
    pub fdr: Option<f64>,
    /// Bootstrap replicates per mediator [default: 500]
    #[arg(long = "B", value_name = "B")]
    pub replicates: Option<usize>,
    #[command(flatten)]
    pub families: ModelArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub boot: BootArgs,
}

/// Settings file; every key is optional and flags override it.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub family_s: Option<Family>,
    pub family_m: Option<Family>,
    pub family_y: Option<Family>,
    pub tau: Option<f64>,
    pub s: Option<f64>,
    pub s_prime: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub tau_grid: Option<String>,
    pub rho_grid: Option<String>,
    pub bootstrap: Option<usize>,
    pub lambda_scale: Option<f64>,
    pub omega: Option<f64>,
    pub seed: Option<u64>,
    pub centered_z: Option<bool>,
    pub b_alpha: Option<f64>,
    pub b_beta: Option<f64>,
    pub n: Option<usize>,
    pub alpha_s: Option<f64>,
    pub beta_m: Option<f64>,
    pub gamma_s: Option<f64>,
    pub replications: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub folds: Option<usize>,
    pub fdr: Option<f64>,
    pub jobs: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings of one invocation, written as the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: PathBuf,
    pub jobs: Option<usize>,
    pub emit: Vec<Format>,
    pub families: Option<FitSpec>,
    pub query: Option<EstimandQuery>,
    pub tau_grid: Option<Vec<f64>>,
    pub bootstrap: Option<AbConfig>,
    pub scenario: Option<SimScenario>,
    pub methods: Option<Vec<Method>>,
    pub options: BTreeMap<String, serde_json::Value>,
}

impl RunConfig {
    fn new(command: &str, global: &GlobalArgs, jobs: Option<usize>) -> Self {
        Self {
            command: command.into(),
            input: None,
            model: None,
            output: global.output.clone(),
            jobs,
            emit: global.emit.clone(),
            families: None,
            query: None,
            tau_grid: None,
            bootstrap: None,
            scenario: None,
            methods: None,
            options: BTreeMap::new(),
        }
    }
}

const DEFAULT_SEED: u64 = 2024;

/// One output file, held in memory until the run has succeeded.
struct Artifact {
    name: String,
    format: Format,
    bytes: Vec<u8>,
}

struct Outcome {
    artifacts: Vec<Artifact>,
    stdout: String,
}

impl Outcome {
    fn new(stdout: String) -> Self {
        Self { artifacts: Vec::new(), stdout }
    }

    fn add(&mut self, name: &str, format: Format, bytes: Vec<u8>) {
        self.artifacts.push(Artifact { name: name.into(), format, bytes });
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.add(name, Format::Json, to_json(value)?.into_bytes());
        Ok(())
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(QmedError::InvalidArgument(e.to_string())))?;
    s.push('\n');
    Ok(s)
}

fn csv_bytes<F: FnOnce(&mut Vec<u8>) -> crate::error::Result<()>>(write: F) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Writes all artifacts; on any failure the files already written, and the
/// directory if this run created it, are removed.
fn commit(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    let created = !dir.exists();
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
    let mut written = Vec::new();
    for a in artifacts {
        let path = dir.join(&a.name);
        if let Err(source) = fs::write(&path, &a.bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            if created {
                let _ = fs::remove_dir(dir);
            }
            return Err(CliError::Io { path, source });
        }
        written.push(path);
    }
    Ok(())
}

/// Parses `start:end:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("grid '{spec}' must have the form start:end:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let (start, end, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(usage(format!("grid '{spec}' needs a positive step and end >= start")));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(usage(format!("grid '{spec}' has too many points")));
    }
    // round away the accumulated binary error of start + k·step
    Ok((0..count).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect())
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>, CliError> {
    if names.iter().any(|n| n.eq_ignore_ascii_case("all")) {
        return Ok(Method::ALL.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let m: Method = checked(n.parse())?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(usage("no methods requested"));
    }
    Ok(out)
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn resolve_spec(args: &ModelArgs, cfg: &ConfigFile) -> FitSpec {
    let d = FitSpec::default();
    FitSpec {
        s: MarginalSpec::new(pick(args.family_s, cfg.family_s, d.s.family)),
        m: MarginalSpec::new(pick(args.family_m, cfg.family_m, d.m.family)),
        y: MarginalSpec::new(pick(args.family_y, cfg.family_y, d.y.family)),
    }
}

fn resolve_query(args: &QueryArgs, cfg: &ConfigFile, p: usize) -> Result<EstimandQuery, CliError> {
    let x = args.x.clone().or_else(|| cfg.x.clone()).unwrap_or_else(|| {
        let mut x = vec![0.0; p];
        x[0] = 1.0;
        x
    });
    if x.len() != p {
        return Err(usage(format!("--x has {} entries but the model has {p} covariates", x.len())));
    }
    checked(EstimandQuery::new(pick(args.tau, cfg.tau, 0.5), pick(args.s, cfg.s, 0.0), pick(args.s_prime, cfg.s_prime, 1.0), x))
}

fn resolve_ab(args: &BootArgs, cfg: &ConfigFile, replicates: Option<usize>, default_replicates: usize) -> Result<AbConfig, CliError> {
    let d = AbConfig::default();
    let ab = AbConfig {
        replicates: pick(replicates, cfg.bootstrap, default_replicates),
        lambda_scale: pick(args.lambda_scale, cfg.lambda_scale, d.lambda_scale),
        omega: pick(args.omega, cfg.omega, d.omega),
        b_alpha: pick(args.b_alpha, cfg.b_alpha, d.b_alpha),
        b_beta: pick(args.b_beta, cfg.b_beta, d.b_beta),
        seed: pick(args.seed, cfg.seed, DEFAULT_SEED),
        centered_z: pick(args.centered_z, cfg.centered_z, d.centered_z),
    };
    checked(ab.validate())?;
    Ok(ab)
}

fn resolve_scenario(args: &SimArgs, cfg: &ConfigFile, seed: Option<u64>) -> Result<SimScenario, CliError> {
    let d = SimScenario::default();
    let dag = DagParams::new(
        pick(args.alpha_s, cfg.alpha_s, 0.0),
        pick(args.beta_m, cfg.beta_m, 0.0),
        pick(args.gamma_s, cfg.gamma_s, d.dag.gamma_s),
    );
    let sc = SimScenario { n: pick(args.n, cfg.n, d.n), dag, seed: pick(seed, cfg.seed, d.seed), ..d };
    checked(sc.validate())?;
    Ok(sc)
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Io { path: path.into(), source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file") });
    }
    Ok(Dataset::from_csv_path(path)?)
}

fn read_table(path: &Path) -> Result<NumericTable, CliError> {
    let file = fs::File::open(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    Ok(NumericTable::from_reader(file)?)
}

fn read_p_values(args: &PValueArgs) -> Result<Vec<f64>, CliError> {
    if let Some(p) = &args.p {
        return Ok(p.clone());
    }
    let path = args.input.as_ref().expect("clap requires one source");
    let table = read_table(path)?;
    let col = ["p_value", "p"].iter().find_map(|n| table.index_of(n)).or(if table.headers.len() == 1 { Some(0) } else { None });
    match col {
        Some(j) => Ok(table.columns[j].clone()),
        None => Err(usage(format!("{}: expected a p_value column", path.display()))),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(stdout) => {
            print!("{stdout}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command, writes its artifacts and returns the text meant
/// for standard output.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let cfg = match &cli.global.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let jobs = cli.global.jobs.or(cfg.jobs);
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(QmedError::InvalidArgument(e.to_string())))?;
    let mut rc = RunConfig::new("", &cli.global, jobs);
    let outcome = pool.install(|| dispatch(&cli.command, &cfg, &mut rc))?;
    let mut artifacts: Vec<Artifact> = outcome.artifacts.into_iter().filter(|a| cli.global.emit.contains(&a.format)).collect();
    if cli.global.manifest {
        artifacts.push(Artifact { name: "manifest.json".into(), format: Format::Json, bytes: to_json(&rc)?.into_bytes() });
    }
    commit(&cli.global.output, &artifacts)?;
    Ok(outcome.stdout)
}

fn dispatch(command: &Command, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Fit(a) => cmd_fit(a, cfg, rc),
        Command::Estimate(a) => cmd_estimate(a, cfg, rc),
        Command::Test(a) => cmd_test(a, cfg, rc),
        Command::Simulate(a) => cmd_simulate(a, cfg, rc),
        Command::Study(StudyCommand::Null(a)) => cmd_study_null(a, cfg, rc),
        Command::Study(StudyCommand::Mixture(a)) => cmd_study_mixture(a, cfg, rc),
        Command::Study(StudyCommand::Power(a)) => cmd_study_power(a, cfg, rc),
        Command::Study(StudyCommand::Mse(a)) => cmd_study_mse(a, cfg, rc),
        Command::Sensitivity(a) => cmd_sensitivity(a, cfg, rc),
        Command::Gof(a) => cmd_gof(a, cfg, rc),
        Command::Combine(a) => cmd_combine(a, rc),
        Command::Fdr(a) => cmd_fdr(a, rc),
        Command::Screen(a) => cmd_screen(a, cfg, rc),
    }
}

fn cmd_fit(a: &FitArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let spec = resolve_spec(&a.model, cfg);
    rc.command = "fit".into();
    rc.input = Some(a.input.clone());
    rc.families = Some(spec);
    let data = read_dataset(&a.input)?;
    let result = fit(&data, &spec)?;
    let body = to_json(&result)?;
    let mut out = Outcome::new(body.clone());
    out.add("fit.json", Format::Json, body.into_bytes());
    Ok(out)
}

fn cmd_estimate(a: &EstimateArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    rc.command = "estimate".into();
    let model: GsemModel = if let Some(path) = &a.model_json {
        rc.model = Some(path.clone());
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let m: GsemModel = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        checked(GsemModel::new(m.marginal_s, m.marginal_m, m.marginal_y, m.dag))?
    } else {
        let path = a.input.as_ref().expect("clap requires one source");
        let spec = resolve_spec(&a.families, cfg);
        rc.input = Some(path.clone());
        rc.families = Some(spec);
        let data = read_dataset(path)?;
        fit(&data, &spec)?.model
    };
    let q = resolve_query(&a.query, cfg, model.p())?;
    let taus = match a.tau_grid.as_ref().or(if a.query.tau.is_none() { cfg.tau_grid.as_ref() } else { None }) {
        Some(g) => parse_grid(g)?,
        None => vec![q.tau],
    };
    if taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(usage("quantile levels must lie in (0, 1)"));
    }
    rc.query = Some(q.clone());
    rc.tau_grid = Some(taus.clone());
    let curve = estimand_curve(&model, &q, &taus)?;
    let table = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["tau", "qnde", "qnie", "qte"])?;
        for v in &curve {
            w.write_record([fmt_num(v.tau), fmt_num(v.qnde), fmt_num(v.qnie), fmt_num(v.qte)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut out = Outcome::new(String::from_utf8_lossy(&table).into_owned());
    out.add("estimates.csv", Format::Csv, table);
    out.json("estimates.json", &json!({ "model": model, "query": q, "values": curve }))?;
    Ok(out)
}

fn cmd_test(a: &TestArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let spec = resolve_spec(&a.families, cfg);
    let methods = parse_methods(&a.method)?;
    let ab = resolve_ab(&a.boot, cfg, a.replicates, 500)?;
    rc.command = "test".into();
    rc.input = Some(a.input.clone());
    rc.families = Some(spec);
    rc.methods = Some(methods.clone());
    rc.bootstrap = Some(ab.clone());
    let data = read_dataset(&a.input)?;
    let q = resolve_query(&a.query, cfg, data.p())?;
    rc.query = Some(q.clone());
    let results = run_tests(&data, &spec, &q, &ab, &methods)?;
    let body = to_json(&results)?;
    let mut out = Outcome::new(body.clone());
    out.add("test.json", Format::Json, body.into_bytes());
    if a.statistics {
        let table = csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["method", "replicate", "statistic"])?;
            for r in &results {
                for (b, v) in r.statistics.iter().enumerate() {
                    w.write_record([r.method.to_string(), b.to_string(), fmt_num(*v)])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
        out.add("statistics.csv", Format::Csv, table);
    }
    Ok(out)
}

fn cmd_simulate(a: &SimulateArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let sc = resolve_scenario(&a.sim, cfg, a.seed)?;
    rc.command = "simulate".into();
    rc.scenario = Some(sc.clone());
    let data = sample_gsem(&sc, &mut data_stream(sc.seed))?;
    let table = csv_bytes(|buf| data.write_csv(buf))?;
    let mut out = Outcome::new(format!("simulated {} rows\n", data.n()));
    out.add("data.csv", Format::Csv, table);
    Ok(out)
}

/// Shared setup of the testing studies.
fn study_setup(a: &StudyArgs, cfg: &ConfigFile, rc: &mut RunConfig, command: &str) -> Result<(SimScenario, Vec<Method>, AbConfig), CliError> {
    let mut sc = resolve_scenario(&a.sim, cfg, a.boot.seed)?;
    sc.replications = pick(a.replications, cfg.replications, sc.replications);
    let ab = resolve_ab(&a.boot, cfg, a.replicates, sc.bootstrap)?;
    sc.bootstrap = ab.replicates;
    sc.seed = ab.seed;
    sc.query = resolve_query(&a.query, cfg, sc.p())?;
    checked(sc.validate())?;
    if sc.replications == 0 {
        return Err(usage("--R must be at least 1"));
    }
    let methods = match a.methods.as_ref().or(cfg.methods.as_ref()) {
        Some(names) => parse_methods(names)?,
        None => Method::ALL.to_vec(),
    };
    rc.command = command.into();
    rc.scenario = Some(sc.clone());
    rc.bootstrap = Some(ab.clone());
    rc.methods = Some(methods.clone());
    rc.query = Some(sc.query.clone());
    Ok((sc, methods, ab))
}

fn study_outputs(report: &StudyReport, qq: bool) -> Result<Outcome, CliError> {
    let rejections = csv_bytes(|buf| report.write_rejections_csv(buf))?;
    let mut out = Outcome::new(String::from_utf8_lossy(&rejections).into_owned());
    out.json("report.json", report)?;
    out.add("rejections.csv", Format::Csv, rejections);
    if qq {
        out.add("qq.csv", Format::Csv, csv_bytes(|buf| report.write_qq_csv(buf))?);
        let mut labels: Vec<&str> = Vec::new();
        for c in &report.cells {
            if !labels.contains(&c.label.as_str()) {
                labels.push(&c.label);
            }
        }
        for label in labels {
            let series = report
                .cells
                .iter()
                .filter(|c| c.label == label)
                .map(|c| svg::Series { name: c.method.to_string(), points: c.qq_points() })
                .collect();
            let chart = svg::Chart {
                title: format!("p-values, {label}"),
                x_label: "uniform quantile".into(),
                y_label: "p-value".into(),
                x_range: (0.0, 1.0),
                y_range: (0.0, 1.0),
                diagonal: true,
                style: svg::Style::Scatter,
                series,
            };
            out.add(&format!("qq_{}.svg", file_safe(label)), Format::Svg, chart.render().into_bytes());
        }
    }
    Ok(out)
}

fn file_safe(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' }).collect()
}

fn cmd_study_null(a: &NullArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let (sc, methods, ab) = study_setup(&a.study, cfg, rc, "study null")?;
    let cases = a.case.clone().unwrap_or_else(|| NullCase::ALL.to_vec());
    rc.options.insert("cases".into(), json!(cases.iter().map(|c| c.label()).collect::<Vec<_>>()));
    let report = run_null_study(&sc, &cases, &methods, &ab)?;
    study_outputs(&report, true)
}

fn cmd_study_mixture(a: &MixtureArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let probs: [f64; 3] = a.probs.clone().try_into().map_err(|_| usage("--probs needs exactly three values"))?;
    if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(usage("--probs must be non-negative and sum to 1"));
    }
    let (sc, methods, ab) = study_setup(&a.study, cfg, rc, "study mixture")?;
    rc.options.insert("probabilities".into(), json!(probs));
    let report = run_mixture_null_study(probs, &sc, &methods, &ab)?;
    study_outputs(&report, true)
}

fn cmd_study_power(a: &PowerArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let grid = match a.grid {
        GridKind::Equal => PowerGrid::Equal(a.values.clone()),
        GridKind::Product => PowerGrid::Product { product: a.product, ratios: a.ratios.clone() },
    };
    checked(grid.points())?;
    let (sc, methods, ab) = study_setup(&a.study, cfg, rc, "study power")?;
    rc.options.insert("grid".into(), json!(grid));
    let report = run_power_study(&sc, &grid, &methods, &ab)?;
    let mut out = study_outputs(&report, false)?;
    let series = methods
        .iter()
        .map(|&m| svg::Series {
            name: m.to_string(),
            points: report.cells.iter().filter(|c| c.method == m).map(|c| (c.alpha_s, c.rejection_rate)).collect(),
        })
        .collect();
    let xs: Vec<f64> = report.cells.iter().map(|c| c.alpha_s).collect();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let chart = svg::Chart {
        title: "rejection rate".into(),
        x_label: "exposure-mediator path".into(),
        y_label: "rejection rate".into(),
        x_range: if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) },
        y_range: (0.0, 1.0),
        diagonal: false,
        style: svg::Style::Line,
        series,
    };
    out.add("power.svg", Format::Svg, chart.render().into_bytes());
    Ok(out)
}

fn cmd_study_mse(a: &MseArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let mut sc = resolve_scenario(&a.sim, cfg, a.seed)?;
    sc.replications = pick(a.replications, cfg.replications, sc.replications);
    sc.query = resolve_query(&a.query, cfg, sc.p())?;
    if a.ns.iter().any(|&n| n <= sc.p()) {
        return Err(usage("every sample size must exceed the number of covariates"));
    }
    let paths: Vec<(f64, f64)> = a
        .paths
        .iter()
        .map(|s| {
            let (x, y) = s.split_once(':').ok_or_else(|| usage(format!("path '{s}' must be alpha:beta")))?;
            let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| usage(format!("path '{s}' must be alpha:beta")));
            Ok((parse(x)?, parse(y)?))
        })
        .collect::<Result<_, CliError>>()?;
    rc.command = "study mse".into();
    rc.scenario = Some(sc.clone());
    rc.query = Some(sc.query.clone());
    rc.options.insert("ns".into(), json!(a.ns));
    rc.options.insert("paths".into(), json!(paths));
    let report = run_mse_study(&sc, &a.ns, &paths)?;
    let table = csv_bytes(|buf| report.write_mse_csv(buf))?;
    let mut out = Outcome::new(String::from_utf8_lossy(&table).into_owned());
    out.json("report.json", &report)?;
    out.add("mse.csv", Format::Csv, table);
    Ok(out)
}

fn cmd_sensitivity(a: &SensitivityArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let spec = resolve_spec(&a.families, cfg);
    let grid = match a.rho_grid.as_ref().or(cfg.rho_grid.as_ref()) {
        Some(g) => parse_grid(g)?,
        None => crate::diagnostics::default_rho_grid(),
    };
    rc.command = "sensitivity".into();
    rc.input = Some(a.input.clone());
    rc.families = Some(spec);
    rc.options.insert("rho_grid".into(), json!(grid));
    let data = read_dataset(&a.input)?;
    let q = resolve_query(&a.query, cfg, data.p())?;
    rc.query = Some(q.clone());
    let curve = checked_grid(sensitivity_curve(&data, &spec, &q, &grid))?;
    let table = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["rho", "qnie"])?;
        for (r, v) in curve.rho_grid.iter().zip(&curve.qnie_at_rho) {
            w.write_record([fmt_num(*r), v.map(fmt_num).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let body = to_json(&json!({
        "breakpoint_abs_rho": curve.breakpoint_abs_rho,
        "observed_abs_corr": curve.observed_abs_corr,
    }))?;
    let mut out = Outcome::new(body);
    out.add("sensitivity.csv", Format::Csv, table);
    out.json("sensitivity.json", &curve)?;
    Ok(out)
}

/// Grid validation errors from the library are usage errors.
fn checked_grid<T>(r: crate::error::Result<T>) -> Result<T, CliError> {
    match r {
        Err(QmedError::InvalidArgument(m)) => Err(usage(m)),
        other => Ok(other?),
    }
}

fn cmd_gof(a: &GofArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let spec = resolve_spec(&a.families, cfg);
    let folds = pick(a.folds, cfg.folds, 5);
    let replicates = pick(a.replicates, cfg.bootstrap, 200);
    let seed = pick(a.seed, cfg.seed, DEFAULT_SEED);
    if folds < 2 || replicates < 1 {
        return Err(usage("--folds must be at least 2 and --B at least 1"));
    }
    rc.command = "gof".into();
    rc.input = Some(a.input.clone());
    rc.families = Some(spec);
    rc.options.insert("folds".into(), json!(folds));
    rc.options.insert("replicates".into(), json!(replicates));
    rc.options.insert("seed".into(), json!(seed));
    let data = read_dataset(&a.input)?;
    let result = checked_grid(gof_test(&data, &spec, folds, replicates, seed))?;
    let body = to_json(&result)?;
    let mut out = Outcome::new(body.clone());
    out.add("gof.json", Format::Json, body.into_bytes());
    Ok(out)
}

fn cmd_combine(a: &CombineArgs, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let p = read_p_values(&a.pvalues)?;
    rc.command = "combine".into();
    rc.input = a.pvalues.input.clone();
    rc.options.insert("method".into(), json!(a.method));
    let (combined, clamped) = checked(cauchy_combination_checked(&p))?;
    if clamped > 0 {
        eprintln!("warning: {clamped} p-value(s) clamped away from 0 or 1");
    }
    let body = to_json(&json!({ "method": a.method, "p_value": combined, "inputs": p.len(), "clamped": clamped }))?;
    let mut out = Outcome::new(body.clone());
    out.add("combine.json", Format::Json, body.into_bytes());
    Ok(out)
}

fn cmd_fdr(a: &FdrArgs, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let p = read_p_values(&a.pvalues)?;
    rc.command = "fdr".into();
    rc.input = a.pvalues.input.clone();
    rc.options.insert("q".into(), json!(a.q));
    let selected = checked(bh_fdr(&p, a.q))?;
    let table = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["index", "p_value", "selected"])?;
        for (i, v) in p.iter().enumerate() {
            w.write_record([i.to_string(), fmt_num(*v), selected.contains(&i).to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let body = to_json(&json!({ "q": a.q, "selected": selected }))?;
    let mut out = Outcome::new(body.clone());
    out.add("fdr.json", Format::Json, body.into_bytes());
    out.add("fdr.csv", Format::Csv, table);
    Ok(out)
}

fn cmd_screen(a: &ScreenArgs, cfg: &ConfigFile, rc: &mut RunConfig) -> Result<Outcome, CliError> {
    let spec = resolve_spec(&a.families, cfg);
    let ab = resolve_ab(&a.boot, cfg, a.replicates, 500)?;
    let fdr = pick(a.fdr, cfg.fdr, 0.1);
    if !(fdr > 0.0 && fdr < 1.0) {
        return Err(usage("--fdr must lie in (0, 1)"));
    }
    rc.command = "screen".into();
    rc.input = Some(a.input.clone());
    rc.families = Some(spec);
    rc.bootstrap = Some(ab.clone());
    rc.options.insert("fdr".into(), json!(fdr));
    let table = read_table(&a.input)?;
    let p = table.covariates()?.first().map_or(1, Vec::len);
    let q = resolve_query(&a.query, cfg, p)?;
    rc.query = Some(q.clone());
    let report = screen(&table, &spec, &q, &ab, fdr)?;
    let csv_table = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["mediator", "estimate", "p_value", "selected"])?;
        for m in &report.mediators {
            w.write_record([m.name.clone(), fmt_num(m.estimate), fmt_num(m.p_value), m.selected.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let body = to_json(&report)?;
    let mut out = Outcome::new(body.clone());
    out.add("screen.json", Format::Json, body.into_bytes());
    out.add("screen.csv", Format::Csv, csv_table);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn grids_are_inclusive_and_clean() {
        let g = parse_grid("0.1:0.9:0.1").unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[2], 0.3);
        assert_eq!(g[8], 0.9);
        assert_eq!(parse_grid("-0.9:0.9:0.01").unwrap().len(), 181);
        assert!(parse_grid("0.1:0.9").is_err());
        assert!(parse_grid("0.9:0.1:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn methods_parse() {
        assert_eq!(parse_methods(&["all".into()]).unwrap().len(), 6);
        assert_eq!(parse_methods(&["qma-ab".into(), "QMA_AB".into(), "js-ym".into()]).unwrap(), vec![Method::QmaAb, Method::JsYm]);
        assert!(parse_methods(&["nope".into()]).is_err());
    }

    #[test]
    fn flags_override_config() {
        let cfg: ConfigFile = toml::from_str("tau = 0.3\nseed = 9\nfamily_y = \"gamma\"").unwrap();
        let q = resolve_query(&QueryArgs { tau: Some(0.7), ..Default::default() }, &cfg, 2).unwrap();
        assert_eq!(q.tau, 0.7);
        assert_eq!(q.x, vec![1.0, 0.0]);
        let ab = resolve_ab(&BootArgs::default(), &cfg, None, 500).unwrap();
        assert_eq!(ab.seed, 9);
        assert_eq!(resolve_spec(&ModelArgs::default(), &cfg).y.family, Family::Gamma);
        assert!(toml::from_str::<ConfigFile>("bogus = 1").is_err());
    }
}
