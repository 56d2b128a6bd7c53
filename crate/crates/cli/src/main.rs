//! `privreg`: privacy-utility sweeps, bound evaluation and noise calibration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use privreg::bounds::{additive_noise_bound, projection_bound, DeltaChoice};
use privreg::experiments::{
    classification_experiment, generate_blobs, generate_planted_dataset, sweep_epsilon, sweep_n,
    Arm, BlobSpec, ClassificationConfig, DimensionRule, SweepEpsilonConfig, SweepNConfig,
};
use privreg::io::{
    bound_row, emit_report, load_csv_dataset, parse_label_map, write_report, Cell, CsvOptions,
    LabelColumn, ReportFormat, ReportTable, BOUND_COLUMNS,
};
use privreg::mechanisms::{
    calibrate_additive_noise, calibrate_projection_noise_sq, mi_dp_to_dp, PrivacyBudget,
};
use privreg::model::Dataset;
use privreg::Error;

#[derive(Parser, Debug)]
#[command(
    name = "privreg",
    version,
    about = "Private linear regression via additive noise or random projection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relative error against the number of rows `n = rows_per_k * k`.
    SweepN(SweepNArgs),
    /// Relative error against the privacy budget at fixed `n`.
    SweepEps(SweepEpsArgs),
    /// Sign classification error on a labelled dataset.
    Classify(ClassifyArgs),
    /// Evaluate the utility bounds of both mechanisms without running trials.
    Bounds(BoundsArgs),
    /// Print calibrated noise variances.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug)]
struct ArmArgs {
    /// Comma list of `log,linear,full,none`; `none` is additive noise.
    #[arg(long, default_value = "log,linear,full,none", value_delimiter = ',')]
    schedules: Vec<Arm>,
    /// Base of the projection-dimension schedules.
    #[arg(long, default_value_t = 1000)]
    base: usize,
    /// Rows per unit of the schedule index `k`.
    #[arg(long, default_value_t = 1000)]
    rows_per_k: usize,
}

impl ArmArgs {
    fn rule(&self) -> Result<DimensionRule, Error> {
        DimensionRule::new(self.rows_per_k, self.base)
    }

    fn echo(&self) -> String {
        let labels: Vec<_> = self.schedules.iter().map(|a| a.label()).collect();
        format!(
            "schedules={} base={} rows_per_k={}",
            labels.join(","),
            self.base,
            self.rows_per_k
        )
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepNArgs {
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value = "0.5", value_parser = parse_budget)]
    epsilon: PrivacyBudget,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 5)]
    k_max: usize,
    #[command(flatten)]
    arms: ArmArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct SweepEpsArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    d: usize,
    /// Comma list of budgets in bits.
    #[arg(long, default_value = "0.1,0.2,0.5,1,2,4", value_parser = parse_budget, value_delimiter = ',')]
    epsilon: Vec<PrivacyBudget>,
    #[command(flatten)]
    arms: ArmArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV with numeric features and one label column; synthetic data when omitted.
    #[arg(long)]
    input_csv: Option<PathBuf>,
    /// Label column as a 0-based index or, with `--header`, a name.
    #[arg(long, default_value = "0")]
    label_col: LabelColumn,
    /// Label mapping such as `4:1,9:-1`.
    #[arg(long)]
    label_map: Option<String>,
    /// Skip rows whose label is not in `--label-map`.
    #[arg(long)]
    drop_unmapped: bool,
    /// The first CSV row holds column names.
    #[arg(long)]
    header: bool,
    /// Sample at most this many rows without replacement.
    #[arg(long)]
    max_rows: Option<usize>,
    /// Keep only the feature columns with the largest energy.
    #[arg(long)]
    top_columns: Option<usize>,
    /// Keep feature columns that are zero in every row.
    #[arg(long)]
    keep_zero_columns: bool,
    /// Fail on entries outside [-1, 1] instead of rescaling columns.
    #[arg(long)]
    no_scale: bool,
    /// Rows of the synthetic dataset.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Columns of the synthetic dataset.
    #[arg(long)]
    d: Option<usize>,
}

struct LoadedInput {
    dataset: Dataset,
    meta: Vec<(String, String)>,
}

impl DataArgs {
    fn load(
        &self,
        seed: u64,
        synthetic: impl FnOnce(usize, usize, u64) -> Result<Dataset, Error>,
        default_d: usize,
    ) -> Result<LoadedInput, Error> {
        let Some(path) = &self.input_csv else {
            let d = self.d.unwrap_or(default_d);
            return Ok(LoadedInput {
                dataset: synthetic(self.n, d, seed)?,
                meta: vec![("data".into(), format!("synthetic n={} d={d}", self.n))],
            });
        };
        let mut opts = CsvOptions::new(self.label_col.clone());
        opts.label_map = self.label_map.as_deref().map(parse_label_map).transpose()?;
        opts.drop_unmapped = self.drop_unmapped;
        opts.has_header = self.header;
        opts.max_rows = self.max_rows;
        opts.top_energy_columns = self.top_columns;
        opts.drop_zero_columns = !self.keep_zero_columns;
        opts.scale = !self.no_scale;
        opts.seed = seed;
        let loaded = load_csv_dataset(path, &opts)?;
        let scaled: Vec<String> = loaded
            .scaled_columns
            .iter()
            .map(|(c, s)| format!("{c}:{s}"))
            .collect();
        let name = path
            .file_name()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        Ok(LoadedInput {
            meta: vec![
                (
                    "data".into(),
                    format!(
                        "csv file={name} rows_read={} n={} d={} label_col={:?} label_map={}",
                        loaded.rows_read,
                        loaded.dataset.n(),
                        loaded.dataset.d(),
                        self.label_col,
                        self.label_map.as_deref().unwrap_or("none"),
                    ),
                ),
                ("scaled_columns".into(), scaled.join(",")),
                ("feature_columns".into(), format!("{:?}", loaded.columns)),
            ],
            dataset: loaded.dataset,
        })
    }
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long, default_value = "0.2", value_parser = parse_budget)]
    epsilon: PrivacyBudget,
    /// Fraction of rows used for training.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Class-mean offset of the synthetic blobs.
    #[arg(long, default_value_t = BlobSpec::default().shift)]
    blob_shift: f64,
    /// Within-class standard deviation of the synthetic blobs.
    #[arg(long, default_value_t = BlobSpec::default().noise_std)]
    blob_noise: f64,
    /// Share of the blob noise common to all columns.
    #[arg(long, default_value_t = BlobSpec::default().correlation)]
    blob_correlation: f64,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    arms: ArmArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Comma list of budgets in bits.
    #[arg(long, default_value = "0.1,0.5,1,2,4", value_parser = parse_budget, value_delimiter = ',')]
    epsilon: Vec<PrivacyBudget>,
    /// Free parameter of the bounds: `auto` or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_delta)]
    delta_free: DeltaChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    arms: ArmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Comma list of budgets in bits.
    #[arg(long, value_parser = parse_budget, value_delimiter = ',', required = true)]
    epsilon: Vec<PrivacyBudget>,
    /// Projection dimension; only the additive-noise variance is printed when omitted.
    #[arg(long)]
    n_prime: Option<usize>,
    /// Squared column-leverage floor of the data.
    #[arg(long, default_value_t = 0.0)]
    f_sq: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_budget(s: &str) -> Result<PrivacyBudget, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    PrivacyBudget::new(v).map_err(|e| e.to_string())
}

fn parse_delta(s: &str) -> Result<DeltaChoice, String> {
    if s == "auto" {
        return Ok(DeltaChoice::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(DeltaChoice::Fixed(v)),
        _ => Err(format!("expected 'auto' or a positive number, got '{s}'")),
    }
}

fn budgets_echo(eps: &[PrivacyBudget]) -> String {
    eps.iter()
        .map(|e| e.bits().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn header_meta(command: &str, base_seed: u64) -> ReportTable {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    ReportTable::default()
        .with_meta("tool", concat!("privreg ", env!("CARGO_PKG_VERSION")))
        .with_meta("command", command)
        .with_meta("base_seed", base_seed)
        .with_meta("timestamp", timestamp)
}

fn finish(mut meta: ReportTable, body: ReportTable, out: Option<&Path>) -> Result<(), Error> {
    meta.header = body.header;
    meta.rows = body.rows;
    match out {
        Some(path) => emit_report(&meta, path, ReportFormat::Csv),
        None => write_report(&meta, std::io::stdout().lock(), ReportFormat::Csv),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::SweepN(a) => {
            let cfg = SweepNConfig {
                d: a.d,
                epsilon: a.epsilon,
                k_range: a.k_min..=a.k_max,
                arms: a.arms.schedules.clone(),
                rule: a.arms.rule()?,
                trials: a.run.trials,
                base_seed: a.run.seed,
            };
            let records = sweep_n(&cfg)?;
            let meta = header_meta("sweep-n", a.run.seed).with_meta(
                "config",
                format!(
                    "d={} epsilon={} k_min={} k_max={} {} trials={}",
                    a.d,
                    a.epsilon.bits(),
                    a.k_min,
                    a.k_max,
                    a.arms.echo(),
                    a.run.trials
                ),
            );
            finish(
                meta,
                ReportTable::from_tradeoff(&records),
                a.run.out.as_deref(),
            )
        }
        Command::SweepEps(a) => {
            let cfg = SweepEpsilonConfig {
                n: a.n,
                d: a.d,
                epsilons: a.epsilon.clone(),
                arms: a.arms.schedules.clone(),
                rule: a.arms.rule()?,
                trials: a.run.trials,
                base_seed: a.run.seed,
            };
            let records = sweep_epsilon(&cfg)?;
            let meta = header_meta("sweep-eps", a.run.seed).with_meta(
                "config",
                format!(
                    "n={} d={} epsilon={} {} trials={}",
                    a.n,
                    a.d,
                    budgets_echo(&a.epsilon),
                    a.arms.echo(),
                    a.run.trials
                ),
            );
            finish(
                meta,
                ReportTable::from_tradeoff(&records),
                a.run.out.as_deref(),
            )
        }
        Command::Classify(a) => {
            let spec = BlobSpec {
                shift: a.blob_shift,
                noise_std: a.blob_noise,
                correlation: a.blob_correlation,
            };
            let input = a.data.load(
                a.run.seed,
                |n, d, seed| generate_blobs(n, d, spec, seed),
                50,
            )?;
            let cfg = ClassificationConfig {
                epsilon: a.epsilon,
                arms: a.arms.schedules.clone(),
                split_fraction: a.split,
                rule: a.arms.rule()?,
                trials: a.run.trials,
                base_seed: a.run.seed,
            };
            let records = classification_experiment(&input.dataset, &cfg)?;
            let mut meta = header_meta("classify", a.run.seed).with_meta(
                "config",
                format!(
                    "epsilon={} split={} blob_shift={} blob_noise={} blob_correlation={} {} trials={}",
                    a.epsilon.bits(),
                    a.split,
                    spec.shift,
                    spec.noise_std,
                    spec.correlation,
                    a.arms.echo(),
                    a.run.trials
                ),
            );
            meta.metadata.extend(input.meta);
            finish(
                meta,
                ReportTable::from_classification(&records),
                a.run.out.as_deref(),
            )
        }
        Command::Bounds(a) => {
            let input = a.data.load(
                a.seed,
                |n, d, seed| Ok(generate_planted_dataset(n, d, seed)?.dataset),
                100,
            )?;
            let ds = &input.dataset;
            let ss = ds.spectral_summary()?;
            let rule = a.arms.rule()?;
            let mut body = ReportTable::new(&BOUND_COLUMNS);
            for &eps in &a.epsilon {
                for &arm in &a.arms.schedules {
                    let (name, n_prime, report) = match rule.n_prime(arm, ds.n()) {
                        None => (
                            "additive".to_string(),
                            None,
                            additive_noise_bound(ss, eps, ds.n(), ds.d(), a.delta_free),
                        ),
                        Some(np) => (
                            format!("projection-{}", arm.label()),
                            Some(np),
                            projection_bound(ss, eps, np, a.delta_free, ds.d()),
                        ),
                    };
                    body.push_row(bound_row(&name, eps.bits(), n_prime, &report))?;
                }
            }
            let delta = match a.delta_free {
                DeltaChoice::Auto => "auto".to_string(),
                DeltaChoice::Fixed(v) => v.to_string(),
            };
            let mut meta = header_meta("bounds", a.seed).with_meta(
                "config",
                format!(
                    "epsilon={} delta_free={delta} {}",
                    budgets_echo(&a.epsilon),
                    a.arms.echo()
                ),
            );
            meta.metadata.extend(input.meta);
            meta.metadata.push((
                "spectrum".into(),
                format!(
                    "sigma_max={} sigma_min={} kappa={} r={} f_sq={}",
                    ss.sigma_max, ss.sigma_min, ss.kappa, ss.r, ss.f_sq
                ),
            ));
            finish(meta, body, a.out.as_deref())
        }
        Command::Calibrate(a) => {
            let mut body = ReportTable::new(&[
                "epsilon",
                "sigma_sq_additive",
                "n_prime",
                "f_sq",
                "sigma_sq_projection",
                "epsilon_dp",
                "delta_dp",
            ]);
            for &eps in &a.epsilon {
                let rp = match a.n_prime {
                    Some(np) => Cell::Float(calibrate_projection_noise_sq(eps, np, a.f_sq)?),
                    None => Cell::Empty,
                };
                let dp = mi_dp_to_dp(eps.bits());
                body.push_row(vec![
                    eps.bits().into(),
                    calibrate_additive_noise(eps).into(),
                    a.n_prime.into(),
                    a.f_sq.into(),
                    rp,
                    dp.epsilon_dp.into(),
                    dp.delta_dp.into(),
                ])?;
            }
            let meta = header_meta("calibrate", 0).with_meta(
                "config",
                format!(
                    "epsilon={} n_prime={:?} f_sq={}",
                    budgets_echo(&a.epsilon),
                    a.n_prime,
                    a.f_sq
                ),
            );
            finish(meta, body, a.out.as_deref())
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("PRIVREG_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("PRIVREG_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
