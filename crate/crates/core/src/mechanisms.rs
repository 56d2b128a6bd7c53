//! Noise calibration and the two release mechanisms.
//!
//! Both mechanisms protect every individual entry of `X` at a budget of
//! `epsilon` bits of conditional mutual information:
//!
//! ```text
//! additive noise:     X_out = X + sigma_an * N,        sigma_an^2 = 1 / (2^(2 eps) - 1)
//! random projection:  X_out = S X + sigma_rp * N,      sigma_rp^2 = (n' / (2^(2 eps) - 1) - f(X)^2)_+
//!                     y_out = S y
//! ```
//!
//! `S` (n' x n) and `N` have independent standard normal entries. The random
//! stream of a mechanism is fully determined by its seed: `S` is drawn first in
//! row-major order, then `N` in row-major order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Rows of `S` generated and multiplied per block.
const SKETCH_BLOCK_ROWS: usize = 256;

/// A per-entry privacy budget in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon.is_finite() {
            Ok(Self(epsilon))
        } else {
            Err(Error::InvalidBudget(epsilon))
        }
    }

    pub fn bits(self) -> f64 {
        self.0
    }

    /// `2^(2 eps) - 1`, evaluated without cancellation for small budgets.
    fn snr(self) -> f64 {
        (2.0 * self.0 * std::f64::consts::LN_2).exp_m1()
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = Error;

    fn try_from(epsilon: f64) -> Result<Self> {
        Self::new(epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    AdditiveNoise,
    RandomProjection,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::AdditiveNoise => "additive-noise",
            Scheme::RandomProjection => "random-projection",
        }
    }
}

/// Everything needed to run one mechanism on one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismConfig {
    pub scheme: Scheme,
    pub epsilon: PrivacyBudget,
    /// Projection dimension; required for [`Scheme::RandomProjection`].
    pub n_prime: Option<usize>,
    pub seed: u64,
}

impl MechanismConfig {
    pub fn additive(epsilon: PrivacyBudget, seed: u64) -> Self {
        Self {
            scheme: Scheme::AdditiveNoise,
            epsilon,
            n_prime: None,
            seed,
        }
    }

    pub fn projection(epsilon: PrivacyBudget, n_prime: usize, seed: u64) -> Self {
        Self {
            scheme: Scheme::RandomProjection,
            epsilon,
            n_prime: Some(n_prime),
            seed,
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<MechanismOutput> {
        match (self.scheme, self.n_prime) {
            (Scheme::AdditiveNoise, _) => apply_additive_noise(ds, self.epsilon, self.seed),
            (Scheme::RandomProjection, Some(n_prime)) => {
                apply_random_projection(ds, self.epsilon, n_prime, self.seed)
            }
            (Scheme::RandomProjection, None) => Err(Error::InvalidParameter(
                "random projection requires a projection dimension".into(),
            )),
        }
    }
}

/// The released regression problem.
///
/// `sigma_sq` is the noise variance the mechanism used. For the projection
/// mechanism it depends on `f(X)` and is bookkeeping only: it is not part of
/// the published release.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutput {
    pub x_out: DMatrix<f64>,
    pub y_out: DVector<f64>,
    pub sigma_sq: f64,
    pub scheme: Scheme,
    pub epsilon: PrivacyBudget,
    pub seed: u64,
}

/// `(epsilon, delta)` differential privacy guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGuarantee {
    pub epsilon_dp: f64,
    pub delta_dp: f64,
}

/// Noise variance of the additive mechanism: `1 / (2^(2 eps) - 1)`.
pub fn calibrate_additive_noise(epsilon: PrivacyBudget) -> f64 {
    1.0 / epsilon.snr()
}

/// Noise variance of the projection mechanism:
/// `max(0, n' / (2^(2 eps) - 1) - f^2)`.
pub fn calibrate_projection_noise(epsilon: PrivacyBudget, n_prime: usize, f: f64) -> Result<f64> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "f must be nonnegative, got {f}"
        )));
    }
    calibrate_projection_noise_sq(epsilon, n_prime, f * f)
}

/// [`calibrate_projection_noise`] taking `f^2` directly.
pub fn calibrate_projection_noise_sq(
    epsilon: PrivacyBudget,
    n_prime: usize,
    f_sq: f64,
) -> Result<f64> {
    if n_prime == 0 {
        return Err(Error::InvalidParameter(
            "projection dimension must be positive".into(),
        ));
    }
    if !(f_sq >= 0.0 && f_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "f^2 must be nonnegative, got {f_sq}"
        )));
    }
    Ok((n_prime as f64 / epsilon.snr() - f_sq).max(0.0))
}

/// Converts an MI budget into a `(0, delta)`-DP guarantee,
/// `delta = min(1, sqrt(2 eps / log2(e)))`.
pub fn mi_dp_to_dp(epsilon: f64) -> DpGuarantee {
    let epsilon = if epsilon > 0.0 { epsilon } else { 0.0 };
    let delta = (2.0 * epsilon / std::f64::consts::LOG2_E).sqrt().min(1.0);
    DpGuarantee {
        epsilon_dp: 0.0,
        delta_dp: delta,
    }
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Releases `X + sigma_an * N` together with the unchanged response.
pub fn apply_additive_noise(
    ds: &Dataset,
    epsilon: PrivacyBudget,
    seed: u64,
) -> Result<MechanismOutput> {
    let sigma_sq = calibrate_additive_noise(epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal_matrix(&mut rng, ds.n(), ds.d());
    Ok(MechanismOutput {
        x_out: ds.x() + noise * sigma_sq.sqrt(),
        y_out: ds.y().clone(),
        sigma_sq,
        scheme: Scheme::AdditiveNoise,
        epsilon,
        seed,
    })
}

/// Releases `(S X + sigma_rp * N, S y)` for a Gaussian sketch `S` with
/// `n_prime` rows.
pub fn apply_random_projection(
    ds: &Dataset,
    epsilon: PrivacyBudget,
    n_prime: usize,
    seed: u64,
) -> Result<MechanismOutput> {
    let (n, d) = (ds.n(), ds.d());
    if n_prime >= n {
        return Err(Error::ProjectionTooLarge { n_prime, n });
    }
    // f(X) depends on X alone; the summary is only reused when it exists.
    let f_sq = match ds.spectral_summary() {
        Ok(ss) => ss.f_sq,
        Err(_) => crate::model::leverage_floor_sq(ds.x()),
    };
    let sigma_sq = calibrate_projection_noise_sq(epsilon, n_prime, f_sq)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x_out = DMatrix::zeros(n_prime, d);
    let mut y_out = DVector::zeros(n_prime);
    let mut start = 0;
    while start < n_prime {
        let rows = SKETCH_BLOCK_ROWS.min(n_prime - start);
        let block = normal_matrix(&mut rng, rows, n);
        x_out.rows_mut(start, rows).copy_from(&(&block * ds.x()));
        y_out.rows_mut(start, rows).copy_from(&(&block * ds.y()));
        start += rows;
    }
    if sigma_sq > 0.0 {
        let noise = normal_matrix(&mut rng, n_prime, d);
        x_out += noise * sigma_sq.sqrt();
    }
    Ok(MechanismOutput {
        x_out,
        y_out,
        sigma_sq,
        scheme: Scheme::RandomProjection,
        epsilon,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn budget(e: f64) -> PrivacyBudget {
        PrivacyBudget::new(e).unwrap()
    }

    fn all_ones() -> Dataset {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        Dataset::new(x, DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0])).unwrap()
    }

    #[test]
    fn additive_calibration_values() {
        assert_relative_eq!(
            calibrate_additive_noise(budget(0.5)),
            1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            calibrate_additive_noise(budget(1.0)),
            1.0 / 3.0,
            max_relative = 1e-15
        );
        assert!(calibrate_additive_noise(budget(1e-9)) > 1e8);
        assert_eq!(PrivacyBudget::new(0.0), Err(Error::InvalidBudget(0.0)));
        assert!(PrivacyBudget::new(-1.0).is_err());
        assert!(PrivacyBudget::new(f64::NAN).is_err());
    }

    #[test]
    fn projection_calibration_values() {
        assert_relative_eq!(
            calibrate_projection_noise(budget(0.5), 3, 1.0).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        assert_eq!(
            calibrate_projection_noise(budget(0.5), 3, 2.0).unwrap(),
            0.0
        );
        assert_eq!(
            calibrate_projection_noise(budget(0.5), 1, 0.0).unwrap(),
            calibrate_additive_noise(budget(0.5))
        );
        assert!(calibrate_projection_noise(budget(0.5), 0, 0.0).is_err());
    }

    #[test]
    fn dp_conversion() {
        assert_eq!(mi_dp_to_dp(0.0).delta_dp, 0.0);
        assert_relative_eq!(
            mi_dp_to_dp(std::f64::consts::LOG2_E / 2.0).delta_dp,
            1.0,
            max_relative = 1e-15
        );
        assert_eq!(mi_dp_to_dp(5.0).delta_dp, 1.0);
        assert_relative_eq!(mi_dp_to_dp(0.2).delta_dp, 0.5265537, epsilon = 1e-6);
        assert_eq!(mi_dp_to_dp(0.2).epsilon_dp, 0.0);
    }

    #[test]
    fn additive_noise_is_deterministic_and_vanishes_at_large_budget() {
        let ds = all_ones();
        let a = apply_additive_noise(&ds, budget(1.0), 7).unwrap();
        let b = apply_additive_noise(&ds, budget(1.0), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.y_out, *ds.y());
        let c = apply_additive_noise(&ds, budget(1.0), 8).unwrap();
        assert_ne!(a.x_out, c.x_out);

        let quiet = apply_additive_noise(&ds, budget(50.0), 7).unwrap();
        assert!((quiet.x_out - ds.x()).norm() < 1e-13);
    }

    #[test]
    fn additive_noise_mean_is_zero() {
        let ds = all_ones();
        let eps = budget(0.5);
        let sigma = calibrate_additive_noise(eps).sqrt();
        let reps = 10_000;
        let mean = (0..reps)
            .map(|seed| apply_additive_noise(&ds, eps, seed).unwrap().x_out[(0, 0)] - 1.0)
            .sum::<f64>()
            / reps as f64;
        assert!(mean.abs() < 4.0 * sigma / 100.0, "mean {mean}");
    }

    #[test]
    fn projection_shapes_and_clamp() {
        let ds = all_ones();
        let out = apply_random_projection(&ds, budget(0.5), 3, 1).unwrap();
        assert_eq!(out.x_out.shape(), (3, 2));
        assert_eq!(out.y_out.len(), 3);
        // f^2 = 3, n' / (2^1 - 1) - 3 = 0
        assert_eq!(out.sigma_sq, 0.0);
        assert_eq!(
            out,
            apply_random_projection(&ds, budget(0.5), 3, 1).unwrap()
        );
        assert_eq!(
            apply_random_projection(&ds, budget(0.5), 4, 1).unwrap_err(),
            Error::ProjectionTooLarge { n_prime: 4, n: 4 }
        );
    }

    #[test]
    fn projection_without_noise_is_a_pure_sketch() {
        let ds = all_ones();
        let out = apply_random_projection(&ds, budget(0.5), 2, 99).unwrap();
        // regenerate S from the same stream, row-major
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = normal_matrix(&mut rng, 2, 4);
        assert!((&s * ds.x() - &out.x_out).abs().max() < 1e-12);
        assert!((&s * ds.y() - &out.y_out).abs().max() < 1e-12);
    }

    #[test]
    fn sketch_gram_matrix_expectation() {
        // E[X_out^T X_out] / n' = X^T X + sigma^2 I
        let x =
            DMatrix::from_row_slice(5, 2, &[0.1, 0.2, -0.3, 0.1, 0.2, 0.0, 0.0, -0.2, 0.1, 0.1]);
        let ds = Dataset::new(x, DVector::from_vec(vec![1.0, 0.0, 2.0, -1.0, 0.5])).unwrap();
        let eps = budget(0.5);
        let n_prime = 2;
        let trials = 20_000;
        let mut acc = DMatrix::zeros(2, 2);
        let mut sigma_sq = 0.0;
        for seed in 0..trials {
            let out = apply_random_projection(&ds, eps, n_prime, seed).unwrap();
            sigma_sq = out.sigma_sq;
            acc += out.x_out.transpose() * &out.x_out;
        }
        acc /= (trials * n_prime as u64) as f64;
        let expected = ds.x().transpose() * ds.x() + DMatrix::identity(2, 2) * sigma_sq;
        assert!(sigma_sq > 1.0);
        // sd of one diagonal sample ~ sqrt(2) * (sigma^2 + ||x||^2), averaged over trials * n'
        let tol = 5.0 * 2f64.sqrt() * (sigma_sq + 0.2) / ((trials * n_prime as u64) as f64).sqrt();
        assert!((acc - expected).abs().max() < tol);
    }

    proptest! {
        #[test]
        fn additive_round_trip(e in 1e-6f64..32.0) {
            let sigma_sq = calibrate_additive_noise(budget(e));
            let recovered = 0.5 * (1.0 / sigma_sq).ln_1p() / std::f64::consts::LN_2;
            prop_assert!((recovered - e).abs() <= 1e-12 * e);
        }

        #[test]
        fn projection_round_trip(e in 1e-3f64..8.0, n_prime in 1usize..500, f in 0.0f64..5.0) {
            let sigma_sq = calibrate_projection_noise(budget(e), n_prime, f).unwrap();
            if sigma_sq > 0.0 {
                let capacity = 0.5 * (n_prime as f64 / (f * f + sigma_sq)).ln_1p() / std::f64::consts::LN_2;
                prop_assert!((capacity - e).abs() <= 1e-12 * e.max(1.0));
            }
        }

        #[test]
        fn calibration_monotonicity(e in 0.01f64..4.0, de in 0.001f64..1.0, n_prime in 1usize..200, f in 0.0f64..10.0, df in 0.0f64..1.0) {
            let lo = budget(e);
            let hi = budget(e + de);
            prop_assert!(calibrate_additive_noise(hi) < calibrate_additive_noise(lo));
            let base = calibrate_projection_noise(lo, n_prime, f).unwrap();
            prop_assert!(calibrate_projection_noise(hi, n_prime, f).unwrap() <= base);
            prop_assert!(calibrate_projection_noise(lo, n_prime, f + df).unwrap() <= base);
            prop_assert!(calibrate_projection_noise(lo, n_prime + 1, f).unwrap() >= base);
        }
    }
}
