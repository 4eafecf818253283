//! The `netreg` command-line tool.
//!
//! Exit codes: 0 success, 2 input validation, 3 model or configuration
//! error, 4 numerical failure.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::io::{
    read_dataset, read_model, read_queries, write_dataset, write_heatmap_csv, write_model, write_predictions, IoError,
    ModelFile, PredictionRecord,
};
use crate::metric::MetricSpec;
use crate::regression::{
    fit_with_config, frechet_r2, mspe_cv, BandwidthRule, BandwidthSelection, Dataset, FitConfig, KernelFamily, Mode,
    RegressionError,
};
use crate::simulation::{
    mise_experiment, simulate_scenario, MonteCarloReport, Scenario, ScenarioSpec, SimulationError, WsbmFlavor,
    WsbmParams,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: IoError },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("prediction at x = {x:?} failed: {source}")]
    Prediction { x: Vec<f64>, source: RegressionError },
}

fn regression_code(e: &RegressionError) -> i32 {
    use RegressionError::*;
    match e {
        LengthMismatch { .. }
        | TooFewObservations(_)
        | PredictorDimension { .. }
        | NonFinitePredictor(_)
        | ResponseSize { .. }
        | ResponseBound { .. }
        | InvalidResponse { .. } => 2,
        SingularDesign { .. }
        | LocalNeedsScalarPredictor(_)
        | MissingKernel
        | InvalidBandwidth(_)
        | EmptyGrid
        | ZeroVariance
        | InvalidFolds(_)
        | Metric(crate::metric::MetricError::InvalidAlpha(_)) => 3,
        BandwidthTooSmall { .. } | AllBandwidthsFailed | Projection(_) | Spectral(_) | Metric(_) => 4,
    }
}

fn io_code(e: &IoError) -> i32 {
    match e {
        IoError::Regression(r) => regression_code(r),
        _ => 2,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::File { source, .. } => io_code(source),
            Self::Io(e) => io_code(e),
            Self::Regression(e) => regression_code(e),
            Self::Prediction { .. } => 4,
            Self::Simulation(e) => match e {
                SimulationError::InvalidSpec(_) | SimulationError::TooFew { .. } => 2,
                SimulationError::DegenerateFit => 3,
                SimulationError::Replicate { source, .. } | SimulationError::Regression(source) => {
                    regression_code(source)
                }
                SimulationError::NonPositiveMise(_) | SimulationError::Projection(_) | SimulationError::Spectral(_) => 4,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "netreg", version, about = "Fréchet regression for networks represented as graph Laplacians")]
pub struct Cli {
    /// Worker threads for parallel loops (default: all cores). Results do
    /// not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress tables and summaries on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from one of the simulation scenarios.
    Simulate(SimulateArgs),
    /// Fit a regression model to a dataset file.
    Fit(FitArgs),
    /// Predict networks at query points from a model file.
    Predict(PredictArgs),
    /// Monte Carlo and cross-validation error estimates.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    /// Mean integrated squared error over simulated replicates.
    Mise(MiseArgs),
    /// Cross-validated mean squared prediction error on a dataset.
    Mspe(MspeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// I, II, III, IV or wsbm.
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,
    /// Number of nodes.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    /// Block-model flavour.
    #[arg(long, value_parser = parse_flavor)]
    pub flavor: Option<WsbmFlavor>,
    /// Nodes in the first block (default m/2).
    #[arg(long)]
    pub m1: Option<usize>,
    #[arg(long)]
    pub p11: Option<f64>,
    #[arg(long)]
    pub p12: Option<f64>,
    #[arg(long)]
    pub p22: Option<f64>,
}

impl ScenarioArgs {
    fn spec(&self, n: usize, seed: u64) -> Result<ScenarioSpec, CliError> {
        let mut spec = ScenarioSpec::new(self.scenario, n, seed).with_m(self.m);
        let block_flags = self.flavor.is_some()
            || self.m1.is_some()
            || self.p11.is_some()
            || self.p12.is_some()
            || self.p22.is_some();
        if self.scenario != Scenario::Wsbm {
            if block_flags {
                return Err(CliError::Usage("block-model flags need --scenario wsbm".into()));
            }
            return Ok(spec);
        }
        let mut w = WsbmParams::standard(self.flavor.unwrap_or_default());
        let m1 = self.m1.unwrap_or(self.m / 2);
        if m1 > self.m {
            return Err(CliError::Usage(format!("--m1 {m1} exceeds --m {}", self.m)));
        }
        w.block_sizes = (m1, self.m - m1);
        w.p11 = self.p11.unwrap_or(w.p11);
        w.p12 = self.p12.unwrap_or(w.p12);
        w.p22 = self.p22.unwrap_or(w.p22);
        spec = spec.with_wsbm(w);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Frobenius,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Epanechnikov,
}

/// Regression settings shared by `fit` and the evaluation commands.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricKind>,
    /// Exponent of the power metric.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    /// A positive bandwidth, or `cv` for leave-one-out cross-validation.
    #[arg(long, default_value = "cv")]
    pub bandwidth: String,
    /// Bandwidth grid for `cv`: comma-separated values, or `log:LO:HI:K`
    /// for K log-spaced points.
    #[arg(long)]
    pub cv_grid: Option<String>,
}

impl ModelArgs {
    fn metric(&self) -> Result<Option<MetricSpec>, CliError> {
        match (self.metric, self.alpha) {
            (None, None) => Ok(None),
            (Some(MetricKind::Frobenius), None) => Ok(Some(MetricSpec::Frobenius)),
            (Some(MetricKind::Frobenius), Some(_)) => Err(CliError::Usage("--alpha needs --metric power".into())),
            (Some(MetricKind::Power) | None, alpha) => {
                let alpha = alpha.unwrap_or(0.5);
                Ok(Some(MetricSpec::power(alpha).map_err(RegressionError::from)?))
            }
        }
    }

    /// The fit configuration, filling unset mode and metric from `default`.
    fn config(&self, default: FitConfig) -> Result<FitConfig, CliError> {
        let mode = match self.mode {
            Some(ModeArg::Global) => Mode::Global,
            Some(ModeArg::Local) => Mode::Local,
            None => default.mode,
        };
        let metric = self.metric()?.unwrap_or(default.metric);
        let family = match self.kernel {
            KernelArg::Gaussian => KernelFamily::Gaussian,
            KernelArg::Epanechnikov => KernelFamily::Epanechnikov,
        };
        let bandwidth = if self.bandwidth.eq_ignore_ascii_case("cv") {
            BandwidthRule::Loocv(self.cv_grid.as_deref().map(parse_grid).transpose()?)
        } else {
            if self.cv_grid.is_some() {
                return Err(CliError::Usage("--cv-grid needs --bandwidth cv".into()));
            }
            let h: f64 = self
                .bandwidth
                .parse()
                .map_err(|_| CliError::Usage(format!("--bandwidth must be a number or `cv`, got {:?}", self.bandwidth)))?;
            BandwidthRule::Fixed(h)
        };
        Ok(FitConfig { mode, metric, family, bandwidth })
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset file (JSON Lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the model file.
    #[arg(long, short)]
    pub output: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Accepted for a uniform interface; fitting itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Query file: one `{"x": [..]}` per line.
    #[arg(long)]
    pub queries: PathBuf,
    /// Output file (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write each predicted Laplacian as `prediction_KKKK.csv` here.
    #[arg(long)]
    pub heatmap_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MiseArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    pub n: Vec<usize>,
    /// Replicates per sample size.
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Quadrature points for the integral over x.
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report JSON file.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MspeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report JSON file.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: SimulationError| e.to_string())
}

fn parse_flavor(s: &str) -> Result<WsbmFlavor, String> {
    s.parse().map_err(|e: SimulationError| e.to_string())
}

/// Parses `a,b,c` or `log:LO:HI:K`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("bad --cv-grid {spec:?}; use `0.1,0.2` or `log:0.01:0.5:20`"));
    let grid: Vec<f64> = if let Some(rest) = spec.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [lo, hi, k] = parts[..] else { return Err(bad()) };
        let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
        let k: usize = k.parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi >= lo && k >= 1) {
            return Err(bad());
        }
        if k == 1 {
            vec![lo]
        } else {
            let (a, b) = (lo.ln(), hi.ln());
            (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
        }
    } else {
        spec.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(bad());
    }
    Ok(grid)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::File { path: path.into(), source: e.into() })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::File { path: path.into(), source: e.into() })
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    read_dataset(open(path)?).map_err(|source| CliError::File { path: path.into(), source })
}

/// Runs `body` with a writer to `path`, or to stdout when `path` is `None`.
fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<(), IoError>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w)?;
            w.flush().map_err(IoError::from)?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
            w.flush().map_err(IoError::from)?;
        }
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::from(io::Error::from(e)))?;
    w.write_all(b"\n").map_err(IoError::from)?;
    w.flush().map_err(IoError::from)?;
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let spec = args.scenario.spec(args.n, args.seed)?;
    let data = simulate_scenario(&spec)?;
    with_output(args.output.as_deref(), |w| write_dataset(w, &data))
}

fn print_selection(out: &mut impl Write, sel: &BandwidthSelection) -> io::Result<()> {
    writeln!(out, "{:>14}  {:>14}", "bandwidth", "loocv")?;
    for (h, c) in sel.grid.iter().zip(&sel.criteria) {
        let mark = if *h == sel.bandwidth { " *" } else { "" };
        match c {
            Some(c) => writeln!(out, "{h:>14.6e}  {c:>14.6e}{mark}")?,
            None => writeln!(out, "{h:>14.6e}  {:>14}", "too small")?,
        }
    }
    writeln!(out, "selected bandwidth: {}", sel.bandwidth)
}

/// Fits a model, writes it, and returns the summary printed to stdout.
pub fn cmd_fit(args: &FitArgs) -> Result<String, CliError> {
    let data = load_dataset(&args.data)?;
    let default = FitConfig::global(MetricSpec::Frobenius);
    let config = args.model.config(default)?;
    let (model, selection) = fit_with_config(data, &config)?;
    let r2 = frechet_r2(&model);
    let file = ModelFile::new(&model, selection.clone());
    let mut w = create(&args.output)?;
    write_model(&mut w, &file)?;
    w.flush().map_err(IoError::from)?;

    let mut out = Vec::new();
    if let Some(sel) = &selection {
        print_selection(&mut out, sel).map_err(IoError::from)?;
    }
    match r2 {
        Ok(r2) => writeln!(out, "Frechet R^2: {r2}"),
        Err(e) => writeln!(out, "Frechet R^2: undefined ({e})"),
    }
    .map_err(IoError::from)?;
    Ok(String::from_utf8_lossy(&out).into_owned())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let file = read_model(open(&args.model)?).map_err(|source| CliError::File { path: args.model.clone(), source })?;
    let model = file.to_model().map_err(|source| CliError::File { path: args.model.clone(), source })?;
    let queries = read_queries(open(&args.queries)?, model.data().dim())
        .map_err(|source| CliError::File { path: args.queries.clone(), source })?;
    let mut records = Vec::with_capacity(queries.len());
    for x in &queries {
        let (lap, _) = model.predict(x).map_err(|source| CliError::Prediction { x: x.clone(), source })?;
        records.push(PredictionRecord::new(x, &lap));
    }
    with_output(args.output.as_deref(), |w| write_predictions(w, &records))?;
    if let Some(dir) = &args.heatmap_csv {
        std::fs::create_dir_all(dir).map_err(|e| CliError::File { path: dir.clone(), source: e.into() })?;
        for (k, rec) in records.iter().enumerate() {
            let path = dir.join(format!("prediction_{k:04}.csv"));
            let mut w = create(&path)?;
            write_heatmap_csv(&mut w, &rec.l)?;
            w.flush().map_err(IoError::from)?;
        }
    }
    Ok(())
}

fn mise_table(report: &MonteCarloReport) -> String {
    let mut out = format!("scenario {} ({} runs per size, seed {})\n", report.spec.scenario, report.runs, report.seed);
    out += &format!("{:>8}  {:>12}  {:>12}\n", "n", "MISE", "SE");
    for s in &report.sizes {
        out += &format!("{:>8}  {:>12.6}  {:>12.6}\n", s.n, s.mise, s.se);
    }
    match report.slope {
        Some(slope) => out += &format!("slope of log MISE on log n: {slope:.4}\n"),
        None => out += "slope of log MISE on log n: needs at least 3 distinct sizes\n",
    }
    out
}

/// Runs the Monte Carlo experiment; returns the report and its table.
pub fn cmd_evaluate_mise(args: &MiseArgs) -> Result<(MonteCarloReport, String), CliError> {
    let spec = args.scenario.spec(args.n.first().copied().unwrap_or(2), 0)?;
    let config = args.model.config(spec.default_config())?;
    let report = mise_experiment(&spec, &args.n, args.runs, &config, args.seed, args.grid_points)?;
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    let table = mise_table(&report);
    Ok((report, table))
}

/// Cross-validated prediction error report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MspeReport {
    pub config: FitConfig,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub mspe: f64,
}

pub fn cmd_evaluate_mspe(args: &MspeArgs) -> Result<(MspeReport, String), CliError> {
    let data = load_dataset(&args.data)?;
    let config = args.model.config(FitConfig::global(MetricSpec::Frobenius))?;
    let mspe = mspe_cv(&data, &config, args.folds, args.repeats, args.seed)?;
    let report = MspeReport { config, folds: args.folds, repeats: args.repeats, seed: args.seed, mspe };
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    let text = format!("MSPE ({} folds, {} repeats): {mspe}\n", args.folds, args.repeats);
    Ok((report, text))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let summary = match &cli.command {
        Command::Simulate(args) => {
            cmd_simulate(args)?;
            None
        }
        Command::Fit(args) => Some(cmd_fit(args)?),
        Command::Predict(args) => {
            cmd_predict(args)?;
            None
        }
        Command::Evaluate(EvaluateCommand::Mise(args)) => Some(cmd_evaluate_mise(args)?.1),
        Command::Evaluate(EvaluateCommand::Mspe(args)) => Some(cmd_evaluate_mspe(args)?.1),
    };
    if let (Some(text), false) = (summary, cli.quiet) {
        print!("{text}");
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return 4;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
