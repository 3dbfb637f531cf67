//! `stratppi` command-line driver.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stratppi::estimators::{classical_mean_ci, estimate};
use stratppi::fixtures::{calibrated_binary_fixture, heterogeneous_binary_fixture};
use stratppi::io::{
    load_csv, parse_allocation, parse_f64_list, parse_lambda_policy, parse_method, write_csv_rows,
    write_reports, CsvOptions, EvaluationCsvRow, OutputFormat,
};
use stratppi::model::{Allocation, EstimatorConfig, LabeledPoint, LambdaPolicy, Method, StratifiedDataset, StratumData};
use stratppi::sampling::{quantile_stratify, stratum_weights_from_ids};
use stratppi::simulation::{run_simulation, SyntheticScenario, DEFAULT_N_GRID, DEFAULT_SIM_ALPHA, DEFAULT_TRIALS, DEFAULT_UNLABELED};
use stratppi::sweep::{run_real_data_sweep, EvaluationPool, SweepConfig, DEFAULT_SWEEP_ALPHA, DEFAULT_SWEEP_K};
use stratppi::Error;

#[derive(Parser)]
#[command(name = "stratppi", version, about = "Stratified prediction-powered inference for mean estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coverage and width study on a synthetic two-stratum population.
    Simulate(SimulateArgs),
    /// Repeated subsampling study on a labeled evaluation pool.
    Sweep(SweepArgs),
    /// One interval from labeled (and optionally unlabeled) data.
    Estimate(EstimateArgs),
    /// Write a synthetic binary evaluation pool as CSV.
    Fixture(FixtureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioName {
    Homogeneous,
    Bias,
    Noise,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Jsonl => OutputFormat::Jsonl,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Args)]
struct MethodArgs {
    /// Estimator (repeatable): classical, ppi_pp, stratppi, stratppi-prop, stratppi-opt, stratppi-heur.
    #[arg(long = "method")]
    methods: Vec<String>,
    /// Autorater weight policy: tuned or fixed=<v>[,<v>...].
    #[arg(long, default_value = "tuned")]
    lambda: String,
    /// Allocation for plain `stratppi`: prop, opt or heur.
    #[arg(long, default_value = "prop")]
    alloc: String,
}

impl MethodArgs {
    fn configs(&self, alpha: f64, defaults: &[&str]) -> Result<Vec<EstimatorConfig>, Error> {
        let lambda = parse_lambda_policy(&self.lambda)?;
        let alloc = parse_allocation(&self.alloc)?;
        let names: Vec<&str> = if self.methods.is_empty() {
            defaults.to_vec()
        } else {
            self.methods.iter().map(String::as_str).collect()
        };
        names
            .into_iter()
            .map(|name| Ok(parse_method(name, alpha, alloc)?.with_lambda(lambda.clone())))
            .collect()
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "homogeneous")]
    scenario: ScenarioName,
    /// Stratum weights for the custom scenario (comma separated).
    #[arg(long)]
    weights: Option<String>,
    /// Per-stratum autorater bias for the custom scenario.
    #[arg(long)]
    mu: Option<String>,
    /// Per-stratum autorater noise for the custom scenario.
    #[arg(long)]
    sigma: Option<String>,
    #[command(flatten)]
    methods: MethodArgs,
    #[arg(long, default_value_t = DEFAULT_SIM_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Labeled budget (repeatable).
    #[arg(long = "n")]
    n: Vec<usize>,
    /// Unlabeled budget.
    #[arg(long = "N", default_value_t = DEFAULT_UNLABELED)]
    big_n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    /// Evaluation pool CSV (label, prediction[, confidence][, stratum]).
    #[arg(long)]
    pool: PathBuf,
    /// Treat labels as 0/1 and predictions as probabilities.
    #[arg(long)]
    binary: bool,
    #[arg(long = "K", default_value_t = DEFAULT_SWEEP_K)]
    k: usize,
    #[command(flatten)]
    methods: MethodArgs,
    #[arg(long, default_value_t = DEFAULT_SWEEP_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "n")]
    n: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV with labeled rows; rows with an empty label count as unlabeled.
    #[arg(long)]
    labeled: PathBuf,
    /// Optional CSV of unlabeled predictions.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    #[arg(long)]
    binary: bool,
    #[arg(long = "K", default_value_t = 1)]
    k: usize,
    /// classical, ppi_pp or stratppi.
    #[arg(long, default_value = "stratppi")]
    method: String,
    #[arg(long, default_value = "tuned")]
    lambda: String,
    #[arg(long, default_value_t = DEFAULT_SWEEP_ALPHA)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Heterogeneous,
    Calibrated,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, value_enum, default_value = "heterogeneous")]
    kind: FixtureKind,
    #[arg(long, default_value_t = 20_000)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Estimate(args) => estimate_cmd(args),
        Command::Fixture(args) => fixture(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stratppi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Error::Config(format!("out: cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut scenario = match args.scenario {
        ScenarioName::Homogeneous => SyntheticScenario::homogeneous(),
        ScenarioName::Bias => SyntheticScenario::bias(),
        ScenarioName::Noise => SyntheticScenario::noise(),
        ScenarioName::Custom => {
            let required = |v: &Option<String>, name: &str| {
                v.as_deref()
                    .ok_or_else(|| Error::Config(format!("{name}: required for the custom scenario")))
                    .and_then(|s| parse_f64_list(s).map_err(|e| Error::Config(format!("{name}: {e}"))))
            };
            let mu = required(&args.mu, "mu")?;
            let sigma = required(&args.sigma, "sigma")?;
            let weights = match &args.weights {
                Some(w) => parse_f64_list(w).map_err(|e| Error::Config(format!("weights: {e}")))?,
                None => vec![1.0 / mu.len() as f64; mu.len()],
            };
            SyntheticScenario {
                name: "custom".into(),
                weights,
                mu,
                sigma,
                ..SyntheticScenario::homogeneous()
            }
        }
    };
    scenario.alpha = args.alpha;
    scenario.trials = args.trials;
    scenario.seed = args.seed;
    scenario.unlabeled = args.big_n;
    if !args.n.is_empty() {
        scenario.n_grid = args.n.clone();
    }
    scenario.validate()?;
    let methods = args
        .methods
        .configs(args.alpha, &["classical", "ppi_pp", "stratppi-prop", "stratppi-opt"])?;
    let reports = run_simulation(&scenario, &methods)?;
    let mut out = open_output(args.out.as_deref())?;
    write_reports(&reports, args.format.into(), &mut out)
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let loaded = load_csv(&args.pool, CsvOptions { binary: args.binary })?;
    let pool = EvaluationPool::new(loaded.rows, args.binary)?;
    let methods = args
        .methods
        .configs(args.alpha, &["classical", "ppi_pp", "stratppi-prop", "stratppi-heur"])?;
    let mut config = SweepConfig::new(methods, if args.n.is_empty() { DEFAULT_N_GRID.to_vec() } else { args.n.clone() });
    config.k = args.k;
    config.alpha = args.alpha;
    config.trials = args.trials;
    config.seed = args.seed;
    let outcome = run_real_data_sweep(&pool, &config)?;
    for w in &outcome.warnings {
        eprintln!("stratppi: warning: {w}");
    }
    let mut out = open_output(args.out.as_deref())?;
    write_reports(&outcome.reports, args.format.into(), &mut out)
}

#[derive(Serialize)]
struct StratumRecord {
    stratum: usize,
    weight: f64,
    lambda_hat: f64,
    n_k: usize,
    #[serde(rename = "N_k")]
    big_n_k: usize,
    rectifier_mean: f64,
    unlabeled_mean: f64,
}

#[derive(Serialize)]
struct EstimateRecord {
    method: String,
    alpha: f64,
    theta_hat: f64,
    lower: f64,
    upper: f64,
    width: f64,
    variance: f64,
    strata: Vec<StratumRecord>,
}

fn estimate_cmd(args: EstimateArgs) -> Result<(), Error> {
    let options = CsvOptions { binary: args.binary };
    let mut rows = load_csv(&args.labeled, options)?.rows;
    if let Some(path) = &args.unlabeled {
        rows.extend(load_csv(path, options)?.rows.into_iter().map(|r| EvaluationCsvRow { label: None, ..r }));
    }
    let method = match args.method.trim().to_ascii_lowercase().as_str() {
        "classical" => Method::Classical,
        "ppi_pp" | "ppi++" => Method::PpiPlusPlus,
        "stratppi" => Method::StratPpi,
        other => {
            return Err(Error::Config(format!(
                "method: unknown method '{other}' (expected classical, ppi_pp or stratppi)"
            )))
        }
    };
    let lambda: LambdaPolicy = parse_lambda_policy(&args.lambda)?;
    let config = EstimatorConfig::new(method, args.alpha).with_lambda(lambda).with_allocation(Allocation::Proportional);
    config.validate()?;
    let (ci, weights) = if method == Method::Classical && rows.iter().all(|r| r.label.is_some()) {
        let labels: Vec<f64> = rows.iter().filter_map(|r| r.label).collect();
        (classical_mean_ci(&labels, args.alpha)?, vec![1.0])
    } else {
        let data = build_dataset(&rows, args.k, args.binary)?;
        (estimate(&data, &config)?, data.weights())
    };
    let record = EstimateRecord {
        method: method.name().to_string(),
        alpha: args.alpha,
        theta_hat: ci.theta_hat,
        lower: ci.lower,
        upper: ci.upper,
        width: ci.width(),
        variance: ci.variance,
        strata: ci
            .per_stratum
            .iter()
            .enumerate()
            .map(|(k, d)| StratumRecord {
                stratum: k,
                weight: weights[k],
                lambda_hat: d.lambda_hat,
                n_k: d.n_k,
                big_n_k: d.N_k,
                rectifier_mean: d.rectifier_mean,
                unlabeled_mean: d.unlabeled_mean,
            })
            .collect(),
    };
    let mut out = open_output(args.out.as_deref())?;
    let text = serde_json::to_string_pretty(&record).map_err(|e| Error::Data(format!("cannot encode result: {e}")))?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

type StratumAssigner = Box<dyn Fn(&EvaluationCsvRow) -> usize>;

/// Strata come from the stratum column when every row has one, otherwise
/// from `k` quantiles of the unlabeled predictions. Weights are the unlabeled
/// stratum masses.
fn build_dataset(rows: &[EvaluationCsvRow], k: usize, binary: bool) -> Result<StratifiedDataset, Error> {
    let unlabeled: Vec<&EvaluationCsvRow> = rows.iter().filter(|r| r.label.is_none()).collect();
    if unlabeled.is_empty() {
        return Err(Error::Data("no unlabeled predictions supplied".into()));
    }
    let (assign, weights): (StratumAssigner, Vec<f64>) =
        if rows.iter().all(|r| r.stratum.is_some()) {
            let ids: Vec<usize> = unlabeled.iter().map(|r| r.stratum.unwrap()).collect();
            let weights = stratum_weights_from_ids(&ids)?;
            let k = weights.len();
            if let Some(r) = rows.iter().find(|r| r.stratum.unwrap() >= k) {
                return Err(Error::Data(format!(
                    "stratum {} has labeled rows but no unlabeled rows",
                    r.stratum.unwrap()
                )));
            }
            (Box::new(|r: &EvaluationCsvRow| r.stratum.unwrap()), weights)
        } else {
            let preds: Vec<f64> = unlabeled.iter().map(|r| r.prediction).collect();
            let s = quantile_stratify(&preds, k)?;
            let weights = s.weights().to_vec();
            (Box::new(move |r: &EvaluationCsvRow| s.stratum_of(r.prediction)), weights)
        };
    let mut strata: Vec<StratumData> = weights.iter().map(|w| StratumData::new(Vec::new(), Vec::new(), *w)).collect();
    for r in rows {
        let s = &mut strata[assign(r)];
        match r.label {
            Some(y) => s.labeled.push(LabeledPoint::new(y, r.prediction)),
            None => s.unlabeled_f.push(r.prediction),
        }
    }
    StratifiedDataset::new(strata, binary)
}

fn fixture(args: FixtureArgs) -> Result<(), Error> {
    let fx = match args.kind {
        FixtureKind::Heterogeneous => heterogeneous_binary_fixture(args.size, args.seed)?,
        FixtureKind::Calibrated => calibrated_binary_fixture(args.size, args.seed)?,
    };
    let mut out = open_output(args.out.as_deref())?;
    write_csv_rows(&fx.rows, &mut out)
}
