//! Seeded experiment harness for the privacy-utility trade-off curves.
//!
//! Every sweep is a pure function of its configuration. Trial `i` of a sweep
//! uses seed `base_seed + i` (wrapping) both for the synthetic dataset and for
//! the mechanism, so any subset of trials can be re-run in isolation. Trials run
//! on the current rayon pool; results are reduced in trial order, so the thread
//! count never changes the output.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanisms::{MechanismConfig, PrivacyBudget, Scheme};
use crate::model::Dataset;
use crate::solvers::{relative_error, solve_release};

/// Random streams derived from one seed. Mechanisms use stream 0.
const DATASET_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;

/// Standard deviation of the planted-model response noise, per `sqrt(d)`.
pub const RESPONSE_NOISE_PER_SQRT_D: f64 = 0.1;

/// Growth law of the projection dimension with the data-size index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schedule {
    /// `round(base * (ln k + 1))`
    Logarithmic,
    /// `round(base * (k + 1) / 2)`
    Linear,
    /// `base * k`
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScheduleKind {
    pub kind: Schedule,
    pub base: usize,
}

/// Projection dimension of a schedule at index `k >= 1`.
pub fn projection_schedule(s: ScheduleKind, k: usize) -> usize {
    let base = s.base as f64;
    let k = k.max(1);
    match s.kind {
        Schedule::Logarithmic => (base * ((k as f64).ln() + 1.0)).round() as usize,
        Schedule::Linear => (base * (k as f64 + 1.0) / 2.0).round() as usize,
        Schedule::Full => s.base * k,
    }
}

/// One compared configuration: additive noise, or projection under a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    AdditiveNoise,
    Projection(Schedule),
}

impl Arm {
    pub fn scheme(self) -> Scheme {
        match self {
            Arm::AdditiveNoise => Scheme::AdditiveNoise,
            Arm::Projection(_) => Scheme::RandomProjection,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::AdditiveNoise => "none",
            Arm::Projection(Schedule::Logarithmic) => "log",
            Arm::Projection(Schedule::Linear) => "linear",
            Arm::Projection(Schedule::Full) => "full",
        }
    }

    /// Parses a comma-separated list such as `none,log,linear,full`.
    pub fn parse_list(s: &str) -> Result<Vec<Arm>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Arm::AdditiveNoise),
            "log" => Ok(Arm::Projection(Schedule::Logarithmic)),
            "linear" => Ok(Arm::Projection(Schedule::Linear)),
            "full" => Ok(Arm::Projection(Schedule::Full)),
            other => Err(Error::InvalidParameter(format!(
                "unknown schedule '{other}', expected none, log, linear or full"
            ))),
        }
    }
}

/// How projection dimensions are derived from the number of rows.
///
/// The data-size index is `k = max(1, round(n / rows_per_k))`. Logarithmic and
/// linear arms use [`projection_schedule`] with `schedule_base`; the full arm
/// projects to `n - 1`, the largest dimension the projection mechanism admits.
/// Every dimension is capped at `n - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionRule {
    pub rows_per_k: usize,
    pub schedule_base: usize,
}

impl DimensionRule {
    pub fn new(rows_per_k: usize, schedule_base: usize) -> Result<Self> {
        if rows_per_k == 0 || schedule_base == 0 {
            return Err(Error::InvalidParameter(
                "schedule bases must be >= 1".into(),
            ));
        }
        Ok(Self {
            rows_per_k,
            schedule_base,
        })
    }

    pub fn k_for(&self, n: usize) -> usize {
        ((n as f64 / self.rows_per_k as f64).round() as usize).max(1)
    }

    pub fn n_prime(&self, arm: Arm, n: usize) -> Option<usize> {
        let cap = n.saturating_sub(1);
        match arm {
            Arm::AdditiveNoise => None,
            Arm::Projection(Schedule::Full) => Some(cap),
            Arm::Projection(kind) => {
                let s = ScheduleKind {
                    kind,
                    base: self.schedule_base,
                };
                Some(projection_schedule(s, self.k_for(n)).min(cap))
            }
        }
    }

    fn config(&self, arm: Arm, n: usize, epsilon: PrivacyBudget, seed: u64) -> MechanismConfig {
        match self.n_prime(arm, n) {
            None => MechanismConfig::additive(epsilon, seed),
            Some(n_prime) => MechanismConfig::projection(epsilon, n_prime, seed),
        }
    }
}

/// Aggregated relative error of one arm at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRecord {
    pub arm: Arm,
    pub epsilon: f64,
    pub n: usize,
    pub d: usize,
    pub n_prime: Option<usize>,
    pub eta_mean: f64,
    pub eta_std: f64,
    pub trials: usize,
    pub base_seed: u64,
}

impl TradeoffRecord {
    pub fn scheme(&self) -> Scheme {
        self.arm.scheme()
    }
}

/// Aggregated test error of one arm in the classification experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRecord {
    pub arm: Arm,
    pub epsilon: f64,
    /// Rows available before the split.
    pub n: usize,
    pub n_train: usize,
    pub n_prime: Option<usize>,
    pub test_error: f64,
    pub test_error_std: f64,
    pub split_fraction: f64,
    pub trials: usize,
    pub base_seed: u64,
}

/// Seed of trial `i`.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    base_seed.wrapping_add(trial as u64)
}

/// Sample mean and sample standard deviation (zero for one sample).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    (mean, var.sqrt())
}

/// A synthetic planted-model dataset and the parameters that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub theta0: DVector<f64>,
    pub noise_std: f64,
}

/// `X` uniform on `[-1, 1]`, `y = X theta0 + 0.1 sqrt(d) z` with `theta0`
/// uniform on `[-1, 1]^d` and `z` standard normal.
pub fn generate_planted_dataset(n: usize, d: usize, seed: u64) -> Result<SyntheticDataset> {
    if n <= d || d == 0 {
        return Err(Error::ShapeError(format!(
            "need n > d >= 1, got n={n}, d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATASET_STREAM);
    let entries: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let x = DMatrix::from_row_slice(n, d, &entries);
    let theta0 = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
    let noise_std = RESPONSE_NOISE_PER_SQRT_D * (d as f64).sqrt();
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * noise_std);
    let y = &x * &theta0 + noise;
    Ok(SyntheticDataset {
        dataset: Dataset::new(x, y)?,
        theta0,
        noise_std,
    })
}

pub fn generate_random_dataset(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    generate_planted_dataset(n, d, seed).map(|s| s.dataset)
}

/// Shape of the two-class Gaussian blobs of [`generate_blobs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    /// Class-mean offset on the first `d / 2` columns.
    pub shift: f64,
    pub noise_std: f64,
    /// Share of the noise variance carried by a factor common to all columns.
    pub correlation: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            shift: 0.2,
            noise_std: 0.5,
            correlation: 0.9,
        }
    }
}

/// Two Gaussian blobs with labels `+1` / `-1`.
///
/// Row `i` is `label * shift * m + noise_std * (sqrt(1 - c) z + sqrt(c) g 1)`,
/// clipped to `[-1, 1]`, where `m` marks the first `d / 2` columns and `g` is
/// a per-row scalar. The common factor makes the class-mean direction a poor
/// classifier on its own, as with correlated image pixels.
pub fn generate_blobs(n: usize, d: usize, spec: BlobSpec, seed: u64) -> Result<Dataset> {
    if n <= d || d == 0 {
        return Err(Error::ShapeError(format!(
            "need n > d >= 1, got n={n}, d={d}"
        )));
    }
    if !(0.0..=1.0).contains(&spec.correlation)
        || !(spec.noise_std >= 0.0)
        || !spec.shift.is_finite()
    {
        return Err(Error::InvalidParameter(format!(
            "invalid blob parameters {spec:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATASET_STREAM);
    let (own, common) = ((1.0 - spec.correlation).sqrt(), spec.correlation.sqrt());
    let informative = (d / 2).max(1);
    let mut labels = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n * d);
    for _ in 0..n {
        let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let g: f64 = rng.sample(StandardNormal);
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let mean = if j < informative {
                label * spec.shift
            } else {
                0.0
            };
            entries.push((mean + spec.noise_std * (own * z + common * g)).clamp(-1.0, 1.0));
        }
        labels.push(label);
    }
    Dataset::new(
        DMatrix::from_row_slice(n, d, &entries),
        DVector::from_vec(labels),
    )
}

/// Applies the mechanism, solves the released problem, and scores the model
/// on the original dataset.
pub fn run_trial(ds: &Dataset, cfg: &MechanismConfig) -> Result<f64> {
    let out = cfg.apply(ds)?;
    let estimate = solve_release(&out)?;
    relative_error(ds, &estimate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepNConfig {
    pub d: usize,
    pub epsilon: PrivacyBudget,
    pub k_range: std::ops::RangeInclusive<usize>,
    pub arms: Vec<Arm>,
    /// Dataset size is `n = rows_per_k * k`.
    pub rule: DimensionRule,
    pub trials: usize,
    pub base_seed: u64,
}

/// Relative error against dataset size. One record per `(k, arm)`, in that order.
pub fn sweep_n(cfg: &SweepNConfig) -> Result<Vec<TradeoffRecord>> {
    check_trials(cfg.trials)?;
    let ks: Vec<usize> = cfg.k_range.clone().collect();
    if ks.first() == Some(&0) {
        return Err(Error::InvalidParameter("k must start at 1".into()));
    }
    let jobs: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..cfg.trials).map(move |t| (k, t)))
        .collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(k, trial)| {
            let n = cfg.rule.rows_per_k * k;
            let seed = trial_seed(cfg.base_seed, trial);
            let ds = generate_random_dataset(n, cfg.d, seed)?;
            cfg.arms
                .iter()
                .map(|&arm| run_trial(&ds, &cfg.rule.config(arm, n, cfg.epsilon, seed)))
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(ks.len() * cfg.arms.len());
    for (ki, &k) in ks.iter().enumerate() {
        let n = cfg.rule.rows_per_k * k;
        let block = &results[ki * cfg.trials..(ki + 1) * cfg.trials];
        for (ai, &arm) in cfg.arms.iter().enumerate() {
            let etas: Vec<f64> = block.iter().map(|r| r[ai]).collect();
            let (eta_mean, eta_std) = mean_std(&etas);
            records.push(TradeoffRecord {
                arm,
                epsilon: cfg.epsilon.bits(),
                n,
                d: cfg.d,
                n_prime: cfg.rule.n_prime(arm, n),
                eta_mean,
                eta_std,
                trials: cfg.trials,
                base_seed: cfg.base_seed,
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEpsilonConfig {
    pub n: usize,
    pub d: usize,
    pub epsilons: Vec<PrivacyBudget>,
    pub arms: Vec<Arm>,
    pub rule: DimensionRule,
    pub trials: usize,
    pub base_seed: u64,
}

/// Relative error against the privacy budget at fixed size. One record per
/// `(epsilon, arm)`, in that order. All budgets of a trial share its dataset.
pub fn sweep_epsilon(cfg: &SweepEpsilonConfig) -> Result<Vec<TradeoffRecord>> {
    check_trials(cfg.trials)?;
    let results: Vec<Vec<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(cfg.base_seed, trial);
            let ds = generate_random_dataset(cfg.n, cfg.d, seed)?;
            let mut etas = Vec::with_capacity(cfg.epsilons.len() * cfg.arms.len());
            for &eps in &cfg.epsilons {
                for &arm in &cfg.arms {
                    etas.push(run_trial(&ds, &cfg.rule.config(arm, cfg.n, eps, seed))?);
                }
            }
            Ok(etas)
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(cfg.epsilons.len() * cfg.arms.len());
    for (ei, &eps) in cfg.epsilons.iter().enumerate() {
        for (ai, &arm) in cfg.arms.iter().enumerate() {
            let idx = ei * cfg.arms.len() + ai;
            let etas: Vec<f64> = results.iter().map(|r| r[idx]).collect();
            let (eta_mean, eta_std) = mean_std(&etas);
            records.push(TradeoffRecord {
                arm,
                epsilon: eps.bits(),
                n: cfg.n,
                d: cfg.d,
                n_prime: cfg.rule.n_prime(arm, cfg.n),
                eta_mean,
                eta_std,
                trials: cfg.trials,
                base_seed: cfg.base_seed,
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationConfig {
    pub epsilon: PrivacyBudget,
    pub arms: Vec<Arm>,
    /// Fraction of rows used for training.
    pub split_fraction: f64,
    /// Applied to the number of training rows.
    pub rule: DimensionRule,
    pub trials: usize,
    pub base_seed: u64,
}

/// Train and test row counts for a split: `test = round((1 - split) n)`.
pub fn split_sizes(n: usize, split_fraction: f64) -> (usize, usize) {
    let test = ((1.0 - split_fraction) * n as f64).round() as usize;
    (n - test.min(n), test.min(n))
}

/// Fraction of rows where `sign(x^T theta)` differs from the label; a zero
/// score counts as an error.
pub fn sign_error(x: &DMatrix<f64>, labels: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let scores = x * theta;
    let wrong = scores
        .iter()
        .zip(labels.iter())
        .filter(|(s, l)| **s == 0.0 || s.signum() != l.signum())
        .count();
    wrong as f64 / labels.len() as f64
}

/// Linear classification on private releases of a seeded training split.
pub fn classification_experiment(
    ds: &Dataset,
    cfg: &ClassificationConfig,
) -> Result<Vec<ClassificationRecord>> {
    check_trials(cfg.trials)?;
    if let Some(row) = ds.y().iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::LabelError {
            row,
            msg: format!("label {} is not +1 or -1", ds.y()[row]),
        });
    }
    if !(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {}",
            cfg.split_fraction
        )));
    }
    let (n, d) = (ds.n(), ds.d());
    let (n_train, n_test) = split_sizes(n, cfg.split_fraction);
    if n_train < d || n_test < d || n_test == 0 {
        return Err(Error::DegenerateSplit {
            train: n_train,
            test: n_test,
            d,
        });
    }

    let results: Vec<Vec<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(cfg.base_seed, trial);
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(SPLIT_STREAM);
            order.shuffle(&mut rng);
            let train = ds.select_rows(&order[..n_train])?;
            let test_rows = &order[n_train..];
            let test_x = DMatrix::from_fn(n_test, d, |i, j| ds.x()[(test_rows[i], j)]);
            let test_y = DVector::from_fn(n_test, |i, _| ds.y()[test_rows[i]]);
            cfg.arms
                .iter()
                .map(|&arm| {
                    let mech = cfg.rule.config(arm, n_train, cfg.epsilon, seed);
                    let theta = solve_release(&mech.apply(&train)?)?.theta;
                    Ok(sign_error(&test_x, &test_y, &theta))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(cfg
        .arms
        .iter()
        .enumerate()
        .map(|(ai, &arm)| {
            let errors: Vec<f64> = results.iter().map(|r| r[ai]).collect();
            let (test_error, test_error_std) = mean_std(&errors);
            ClassificationRecord {
                arm,
                epsilon: cfg.epsilon.bits(),
                n,
                n_train,
                n_prime: cfg.rule.n_prime(arm, n_train),
                test_error,
                test_error_std,
                split_fraction: cfg.split_fraction,
                trials: cfg.trials,
                base_seed: cfg.base_seed,
            }
        })
        .collect())
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        Err(Error::InvalidParameter(
            "at least one trial is required".into(),
        ))
    } else {
        Ok(())
    }
}
