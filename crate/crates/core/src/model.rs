//! Regression datasets and the spectral functionals every mechanism and bound
//! consumes.
//!
//! A [`Dataset`] holds the design matrix `X` (one row per user, entries in
//! `[-1, 1]`, full column rank, more rows than columns) and the response `y`.
//! Its [`SpectralSummary`] is computed from a single thin SVD and cached on the
//! dataset the first time it is requested:
//!
//! ```text
//! kappa = sigma_max / sigma_min
//! r     = ||X theta*|| / ||X theta* - y||
//! f_i   = sqrt( sum_rows X[row,i]^2 - max_row X[row,i]^2 )     (per column)
//! f     = min_i f_i
//! ```

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Design matrix and response of a least-squares problem, validated once.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    summary: OnceLock<Result<SpectralSummary>>,
}

/// SVD-derived functionals of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Singular values of `X`, descending.
    pub singular_values: Vec<f64>,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Condition number `sigma_max / sigma_min`.
    pub kappa: f64,
    /// Residual ratio `||X theta*|| / ||X theta* - y||`.
    pub r: f64,
    /// Column-leverage floor, the minimum of `f_per_column`.
    pub f: f64,
    /// `f^2`, computed without the square-root round trip.
    pub f_sq: f64,
    pub f_per_column: Vec<f64>,
    /// Least-squares minimizer of the original problem.
    pub theta_star: DVector<f64>,
    /// `||X theta*||`
    pub fitted_norm: f64,
    /// `||X theta* - y||`
    pub residual_norm: f64,
}

impl SpectralSummary {
    /// `g(theta*) = ||X theta* - y||^2`, the optimal objective.
    pub fn optimal_objective(&self) -> f64 {
        self.residual_norm * self.residual_norm
    }
}

/// Numerical rank cutoff used throughout: `max(n, d) * eps * sigma_max`.
pub(crate) fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Number of singular values above the standard pseudoinverse cutoff.
pub(crate) fn numerical_rank(singular_values: &[f64], rows: usize, cols: usize) -> usize {
    let sigma_max = singular_values.iter().copied().fold(0.0, f64::max);
    let tol = rank_tolerance(rows, cols, sigma_max);
    singular_values.iter().filter(|&&s| s > tol).count()
}

/// Thin SVD with singular values (and the matching vectors) in descending order.
pub(crate) fn sorted_svd(x: &DMatrix<f64>) -> SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    let mut svd = SVD::new(x.clone(), true, true);
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if order.iter().enumerate().any(|(i, &j)| i != j) {
        let values = DVector::from_fn(k, |i, _| svd.singular_values[order[i]]);
        let u = svd
            .u
            .as_ref()
            .map(|u| DMatrix::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]));
        let v_t = svd
            .v_t
            .as_ref()
            .map(|v_t| DMatrix::from_fn(k, v_t.ncols(), |r, c| v_t[(order[r], c)]));
        svd.singular_values = values;
        svd.u = u;
        svd.v_t = v_t;
    }
    svd
}

/// Validates `X` and `y` and wraps them in a [`Dataset`].
pub fn validate_dataset(x: DMatrix<f64>, y: DVector<f64>) -> Result<Dataset> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(Error::ShapeError("X must be nonempty".into()));
    }
    if y.len() != n {
        return Err(Error::ShapeError(format!(
            "y has length {} but X has {} rows",
            y.len(),
            n
        )));
    }
    if n <= d {
        return Err(Error::ShapeError(format!(
            "need more rows than columns, got {n}x{d}"
        )));
    }
    for col in 0..d {
        for row in 0..n {
            let value = x[(row, col)];
            if !value.is_finite() || value.abs() > 1.0 {
                return Err(Error::EntryOutOfRange { row, col, value });
            }
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::ShapeError(format!("y[{i}] is not finite")));
    }
    let singular_values = x.clone().singular_values();
    let rank = numerical_rank(singular_values.as_slice(), n, d);
    if rank < d {
        return Err(Error::RankDeficient { rank, cols: d });
    }
    Ok(Dataset {
        x,
        y,
        summary: OnceLock::new(),
    })
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        validate_dataset(x, y)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Number of rows (users).
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of columns (features).
    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Cached spectral summary; computed on first call.
    pub fn spectral_summary(&self) -> Result<&SpectralSummary> {
        self.summary
            .get_or_init(|| compute_summary(&self.x, &self.y))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let d = self.d();
        let x = DMatrix::from_fn(rows.len(), d, |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        validate_dataset(x, y)
    }
}

/// Spectral summary of a dataset. See [`Dataset::spectral_summary`] for the
/// cached form.
pub fn spectral_summary(ds: &Dataset) -> Result<SpectralSummary> {
    ds.spectral_summary().cloned()
}

fn compute_summary(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<SpectralSummary> {
    let svd = sorted_svd(x);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let sigma_max = singular_values[0];
    let sigma_min = *singular_values.last().expect("d >= 1");

    // theta* = V diag(1/sigma) U^T y
    let uty = u.transpose() * y;
    let scaled = DVector::from_fn(uty.len(), |i, _| uty[i] / singular_values[i]);
    let theta_star = v_t.transpose() * scaled;
    let fitted = x * &theta_star;
    let residual = &fitted - y;
    let fitted_norm = fitted.norm();
    let residual_norm = residual.norm();

    let (n, d) = x.shape();
    if residual_norm <= 100.0 * n.max(d) as f64 * f64::EPSILON * y.norm() {
        return Err(Error::ZeroResidual);
    }

    let f_sq = leverage_floor_sq(x);
    let (f, f_per_column) = leverage_floor(x);
    Ok(SpectralSummary {
        f_sq,
        sigma_max,
        sigma_min,
        kappa: sigma_max / sigma_min,
        r: fitted_norm / residual_norm,
        f,
        f_per_column,
        singular_values,
        theta_star,
        fitted_norm,
        residual_norm,
    })
}

/// Column-leverage floor `f(X)` and the per-column values `f_i(X)`.
///
/// Each `f_i` is taken over column `i`: the column's energy with its largest
/// squared entry removed.
pub fn column_leverage_floor(ds: &Dataset) -> (f64, Vec<f64>) {
    leverage_floor(ds.x())
}

fn column_energy_without_peak(x: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    x.column_iter().map(|col| {
        let (sum, max) = col
            .iter()
            .map(|v| v * v)
            .fold((0.0, 0.0f64), |(s, m), sq| (s + sq, m.max(sq)));
        (sum - max).max(0.0)
    })
}

pub(crate) fn leverage_floor(x: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let per_column: Vec<f64> = column_energy_without_peak(x).map(f64::sqrt).collect();
    let f = per_column.iter().copied().fold(f64::INFINITY, f64::min);
    (f, per_column)
}

/// `f(X)^2`
pub(crate) fn leverage_floor_sq(x: &DMatrix<f64>) -> f64 {
    column_energy_without_peak(x).fold(f64::INFINITY, f64::min)
}
