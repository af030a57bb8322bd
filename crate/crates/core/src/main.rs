use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use csfs::dataio::{load_dataset, read_costs, ScaleMode};
use csfs::harness::{run_experiment, ExperimentConfig, KernelChoice, P1Scope};
use csfs::metrics::ThresholdMode;
use csfs::report::{sha256_hex, write_reports, DatasetFingerprint, RunManifest};
use csfs::{Error, Result};

#[derive(Parser)]
#[command(name = "csfs", version, about = "Cost-sensitive feature selection for SVMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run nested cross-validation on a CSV dataset and write reports.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Experiment config (TOML); flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    kernel: Option<KernelChoice>,
    #[arg(long)]
    thresholds: Option<ThresholdMode>,
    /// Significance level for Hoeffding thresholds.
    #[arg(long)]
    alpha: Option<f64>,
    /// Allowed drop below the reference SVM rates.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda_pos: Option<f64>,
    #[arg(long)]
    lambda_neg: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long)]
    loo_cutoff: Option<usize>,
    /// Seconds per solve.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    p1_node_limit: Option<usize>,
    #[arg(long)]
    svm_node_limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scale: Option<ScaleMode>,
    /// One value per feature, or `name,cost` lines.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long)]
    p1_scope: Option<P1Scope>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    c.$f = v;
                }
            )*};
        }
        set!(kernel, thresholds, alpha, delta, c_grid, gamma_grid, folds, inner_folds, loo_cutoff, time_limit, seed, scale, p1_scope, workers);
        if self.lambda_pos.is_some() {
            c.lambda_pos = self.lambda_pos;
        }
        if self.lambda_neg.is_some() {
            c.lambda_neg = self.lambda_neg;
        }
        if self.p1_node_limit.is_some() {
            c.p1_node_limit = self.p1_node_limit;
        }
        if self.svm_node_limit.is_some() {
            c.svm_node_limit = self.svm_node_limit;
        }
        if c.dataset.is_empty() {
            c.dataset = self
                .data
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        c.validate()?;
        Ok(c)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn fingerprint(path: &Path, rows: usize, columns: usize) -> Result<DatasetFingerprint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(DatasetFingerprint {
        path: path.display().to_string(),
        rows,
        columns,
        sha256: sha256_hex(&bytes),
    })
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let started = unix_now();
    let cfg = args.config()?;
    let mut data = load_dataset(&args.data, args.label_col.as_deref())?;
    if let Some(p) = &args.costs {
        let costs = read_costs(p, &data.names)?;
        data = data.with_costs(costs)?;
    }
    let report = run_experiment(&cfg, &data)?;
    let fp = fingerprint(&args.data, data.n_samples(), data.n_features())?;
    let manifest = RunManifest::new(&report, fp, started, unix_now());
    write_reports(&args.out, &report, manifest)?;
    print!("{}", csfs::report::render_text(&report));
    if report.all_infeasible() {
        eprintln!(
            "error: the rate thresholds are infeasible on every fold; no feature subset reaches them. \
             Lower --lambda-pos/--lambda-neg or raise --delta."
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => match run(args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
