//! Least-squares and ridge solvers, the objective, and relative error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mechanisms::{MechanismOutput, Scheme};
use crate::model::{numerical_rank, rank_tolerance, sorted_svd, Dataset};

/// Which problem a model was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    Exact,
    AdditiveNoise,
    RandomProjection,
    Ridge,
}

impl From<Scheme> for EstimateSource {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::AdditiveNoise => EstimateSource::AdditiveNoise,
            Scheme::RandomProjection => EstimateSource::RandomProjection,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEstimate {
    pub theta: DVector<f64>,
    pub source: EstimateSource,
}

/// Ridge regularization weight `lambda >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeProblem {
    lambda: f64,
}

impl RidgeProblem {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda >= 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(Error::InvalidParameter(format!(
                "ridge weight must be >= 0, got {lambda}"
            )))
        }
    }

    pub fn lambda(self) -> f64 {
        self.lambda
    }
}

fn check_shapes(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::ShapeError(format!(
            "X has {} rows but y has length {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::ShapeError("X has no columns".into()));
    }
    Ok(())
}

/// `argmin ||X theta - y||^2` through a Householder QR factorization.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<ModelEstimate> {
    check_shapes(x, y)?;
    let (n, d) = x.shape();
    if n < d {
        return Err(Error::RankDeficient { rank: n, cols: d });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    let tol = rank_tolerance(n, d, largest);
    let rank = diag.iter().filter(|&&v| v > tol).count();
    if rank < d {
        return Err(Error::RankDeficient { rank, cols: d });
    }
    let qty = qr.q().tr_mul(y);
    let theta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { rank, cols: d })?;
    Ok(ModelEstimate {
        theta,
        source: EstimateSource::Exact,
    })
}

/// Solves the released problem of a mechanism.
pub fn solve_release(out: &MechanismOutput) -> Result<ModelEstimate> {
    let mut est = least_squares(&out.x_out, &out.y_out)?;
    est.source = out.scheme.into();
    Ok(est)
}

/// Ridge solution `V (S^2 + lambda I)^-1 S U^T y` from the SVD of `X`.
pub fn ridge_closed_form(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    rp: RidgeProblem,
) -> Result<ModelEstimate> {
    check_shapes(x, y)?;
    let (n, d) = x.shape();
    let svd = sorted_svd(x);
    let values = svd.singular_values.as_slice();
    let lambda = rp.lambda();
    if lambda == 0.0 {
        let rank = numerical_rank(values, n, d);
        if rank < d {
            return Err(Error::RankDeficient { rank, cols: d });
        }
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let uty = u.tr_mul(y);
    let weighted = DVector::from_fn(values.len(), |i, _| {
        let s = values[i];
        let denom = s * s + lambda;
        if denom > 0.0 {
            s * uty[i] / denom
        } else {
            0.0
        }
    });
    Ok(ModelEstimate {
        theta: v_t.tr_mul(&weighted),
        source: EstimateSource::Ridge,
    })
}

/// `g(theta) = ||X theta - y||^2`.
pub fn objective(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
    check_shapes(x, y)?;
    if x.ncols() != theta.len() {
        return Err(Error::ShapeError(format!(
            "X has {} columns but theta has length {}",
            x.ncols(),
            theta.len()
        )));
    }
    Ok((x * theta - y).norm_squared())
}

/// `g(theta_hat) / g(theta*)` on the original dataset.
pub fn relative_error(ds: &Dataset, estimate: &ModelEstimate) -> Result<f64> {
    let ss = ds.spectral_summary()?;
    let g_hat = objective(ds.x(), ds.y(), &estimate.theta)?;
    Ok(g_hat / ss.optimal_objective())
}
