//! Closed-form utility bounds and the channel-capacity bounds behind the noise
//! calibration.
//!
//! Additive noise. With `Delta = sigma_an (sqrt(n) + sqrt(d)) / sigma_max` and
//! a free parameter `delta > 0` such that `kappa (Delta + delta) < 1`,
//!
//! ```text
//! eta_an <= (1 + kappa (Delta + delta) / (1 - kappa (Delta + delta)) * (kappa + r))^2
//! ```
//!
//! holds with probability at least `1 - 2 exp(-sigma_max^2 delta^2 / (2 sigma_an^2))`.
//! This composes the least-squares perturbation bound with the Gaussian
//! largest-singular-value tail at `t = sigma_max delta / sigma_an`.
//!
//! Random projection. With `lambda = sigma_rp^2`,
//!
//! ```text
//! l1 = lambda (max_i sigma_i / (sigma_i^2 + lambda))^2 r^2
//! l2 = lambda r / (sigma_min^2 + lambda)
//! eta_rp <= (1 + delta)^2 (1 + l1) (1 + l2)^2
//! ```
//!
//! with probability at least `1 - c1 exp(-c2 n' delta^2)` for
//! `delta >= sqrt(c0 d / n')`. The constants `c0, c1, c2` have no published
//! values; they default to 1 and every report that uses them lists them as
//! unresolved.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
#[cfg(test)]
use crate::mechanisms::calibrate_projection_noise;
use crate::mechanisms::{calibrate_additive_noise, calibrate_projection_noise_sq, PrivacyBudget};
use crate::model::SpectralSummary;

/// Placeholder value for the unpublished sketching constants.
pub const UNRESOLVED_CONSTANT: f64 = 1.0;

/// How the free parameter `delta` of a bound is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaChoice {
    /// Additive noise: halfway to the validity boundary, `(1/kappa - Delta) / 2`.
    /// Random projection: `sqrt(c0 d / n')`.
    Auto,
    Fixed(f64),
}

/// A theoretical relative-error bound with its probability statement.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub eta_bound: f64,
    /// Clamped at zero; the raw value is kept as `probability_raw`.
    pub probability_lower_bound: f64,
    pub delta_free: f64,
    pub intermediates: BTreeMap<String, f64>,
    /// Names of intermediates that hold placeholder constants.
    pub unresolved: Vec<String>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.intermediates.get(name).copied()
    }
}

/// Receive model of one column of the projected release: `n'` observations of
/// a single entry in i.i.d. Gaussian noise of variance `sigma_rp^2 + f^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub n_prime: usize,
    pub sigma_rp_sq: f64,
    pub f_sq: f64,
    pub sigma_nu_sq: f64,
}

impl ChannelSpec {
    pub fn new(n_prime: usize, sigma_rp_sq: f64, f_sq: f64) -> Result<Self> {
        if n_prime == 0 {
            return Err(Error::InvalidParameter(
                "receive dimension must be positive".into(),
            ));
        }
        if !(sigma_rp_sq >= 0.0) || !(f_sq >= 0.0) {
            return Err(Error::InvalidParameter(
                "noise variances must be nonnegative".into(),
            ));
        }
        Ok(Self {
            n_prime,
            sigma_rp_sq,
            f_sq,
            sigma_nu_sq: sigma_rp_sq + f_sq,
        })
    }

    fn checked_noise(&self) -> Result<f64> {
        if self.sigma_nu_sq > 0.0 {
            Ok(self.sigma_nu_sq)
        } else {
            Err(Error::DegenerateChannel)
        }
    }
}

/// Largest-singular-value tail query for an `n x d` standard Gaussian matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailQuery {
    pub n: usize,
    pub d: usize,
    pub t: f64,
}

impl TailQuery {
    pub fn new(n: usize, d: usize, t: f64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParameter(
                "matrix dimensions must be positive".into(),
            ));
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tail parameter must be >= 0, got {t}"
            )));
        }
        Ok(Self { n, d, t })
    }

    /// `sqrt(n) + sqrt(d) + t`
    pub fn threshold(&self) -> f64 {
        (self.n as f64).sqrt() + (self.d as f64).sqrt() + self.t
    }
}

/// Bound on `||X theta_hat - y|| / ||X theta* - y||` for a perturbation of
/// relative size `delta_rel`: `1 + kappa delta / (1 - kappa delta) (kappa + r)`.
pub fn wedin_perturbation_bound(kappa: f64, delta_rel: f64, r: f64) -> Result<f64> {
    let kd = kappa * delta_rel;
    if !(kd < 1.0) {
        return Err(Error::ConditionViolated(format!(
            "kappa * Delta = {kd} >= 1"
        )));
    }
    Ok(1.0 + kd / (1.0 - kd) * (kappa + r))
}

/// `max(0, 1 - 2 exp(-t^2 / 2))`, a lower bound on
/// `P(sigma_max(N) <= sqrt(n) + sqrt(d) + t)`.
pub fn gaussian_smax_tail(q: TailQuery) -> f64 {
    gaussian_smax_tail_raw(q.t).max(0.0)
}

fn gaussian_smax_tail_raw(t: f64) -> f64 {
    1.0 - 2.0 * (-t * t / 2.0).exp()
}

/// `Delta(X, eps) = sigma_an (sqrt(n) + sqrt(d)) / sigma_max`.
pub fn additive_delta(ss: &SpectralSummary, epsilon: PrivacyBudget, n: usize, d: usize) -> f64 {
    calibrate_additive_noise(epsilon).sqrt() * ((n as f64).sqrt() + (d as f64).sqrt())
        / ss.sigma_max
}

/// Halfway point `(1/kappa - Delta) / 2`; fails when no admissible `delta` exists.
pub fn auto_additive_delta(
    ss: &SpectralSummary,
    epsilon: PrivacyBudget,
    n: usize,
    d: usize,
) -> Result<f64> {
    let delta = additive_delta(ss, epsilon, n, d);
    let half = (1.0 / ss.kappa - delta) / 2.0;
    if half > 0.0 {
        Ok(half)
    } else {
        Err(Error::ConditionViolated(format!(
            "kappa * Delta = {} >= 1 leaves no admissible delta",
            ss.kappa * delta
        )))
    }
}

/// Relative-error bound of the additive-noise mechanism.
pub fn additive_noise_bound(
    ss: &SpectralSummary,
    epsilon: PrivacyBudget,
    n: usize,
    d: usize,
    delta_free: DeltaChoice,
) -> Result<BoundReport> {
    let sigma_sq = calibrate_additive_noise(epsilon);
    let delta = additive_delta(ss, epsilon, n, d);
    let free = match delta_free {
        DeltaChoice::Auto => auto_additive_delta(ss, epsilon, n, d)?,
        DeltaChoice::Fixed(v) if v > 0.0 => v,
        DeltaChoice::Fixed(v) => {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {v}"
            )))
        }
    };
    let ratio = wedin_perturbation_bound(ss.kappa, delta + free, ss.r)?;
    let t = ss.sigma_max * free / sigma_sq.sqrt();
    let raw = gaussian_smax_tail_raw(t);

    let intermediates = BTreeMap::from([
        ("Delta".to_string(), delta),
        ("sigma_sq".to_string(), sigma_sq),
        ("kappa".to_string(), ss.kappa),
        ("r".to_string(), ss.r),
        ("sigma_max".to_string(), ss.sigma_max),
        ("tail_t".to_string(), t),
        ("probability_raw".to_string(), raw),
    ]);
    Ok(BoundReport {
        eta_bound: ratio * ratio,
        probability_lower_bound: raw.max(0.0),
        delta_free: free,
        intermediates,
        unresolved: Vec::new(),
    })
}

/// `1 + lambda / (sigma_min^2 + lambda) * r`, bounding
/// `||X theta_rr - y|| / ||X theta* - y||`.
pub fn ridge_relative_bound(sigma_min: f64, lambda: f64, r: f64) -> f64 {
    if lambda.is_infinite() {
        return 1.0 + r;
    }
    1.0 + lambda / (sigma_min * sigma_min + lambda) * r
}

/// `max_i sigma_i / (sigma_i^2 + lambda)`
pub fn ridge_gain(singular_values: &[f64], lambda: f64) -> f64 {
    singular_values
        .iter()
        .map(|&s| s / (s * s + lambda))
        .fold(0.0, f64::max)
}

/// `(max_i sigma_i / (sigma_i^2 + lambda)) * ||X theta*||`, bounding `||theta_rr||`.
pub fn ridge_norm_bound(singular_values: &[f64], lambda: f64, x_theta_star_norm: f64) -> f64 {
    ridge_gain(singular_values, lambda) * x_theta_star_norm
}

/// The sketching-plus-ridge terms `(l1, l2, eta_bound)` for an explicit noise level.
pub fn projection_terms(
    singular_values: &[f64],
    sigma_rp_sq: f64,
    r: f64,
    delta: f64,
) -> (f64, f64, f64) {
    let sigma_min = singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let gain = ridge_gain(singular_values, sigma_rp_sq);
    let l1 = sigma_rp_sq * gain * gain * r * r;
    let l2 = sigma_rp_sq * r / (sigma_min * sigma_min + sigma_rp_sq);
    let eta = (1.0 + delta).powi(2) * (1.0 + l1) * (1.0 + l2).powi(2);
    (l1, l2, eta)
}

/// Relative-error bound of the projection mechanism.
pub fn projection_bound(
    ss: &SpectralSummary,
    epsilon: PrivacyBudget,
    n_prime: usize,
    delta_free: DeltaChoice,
    d: usize,
) -> Result<BoundReport> {
    let (c0, c1, c2) = (
        UNRESOLVED_CONSTANT,
        UNRESOLVED_CONSTANT,
        UNRESOLVED_CONSTANT,
    );
    let sigma_sq = calibrate_projection_noise_sq(epsilon, n_prime, ss.f_sq)?;
    let delta = match delta_free {
        DeltaChoice::Auto => (c0 * d as f64 / n_prime as f64).sqrt(),
        DeltaChoice::Fixed(v) if v > 0.0 => v,
        DeltaChoice::Fixed(v) => {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {v}"
            )))
        }
    };
    let (l1, l2, eta) = projection_terms(&ss.singular_values, sigma_sq, ss.r, delta);
    let raw = 1.0 - c1 * (-c2 * n_prime as f64 * delta * delta).exp();

    let intermediates = BTreeMap::from([
        ("l1".to_string(), l1),
        ("l2".to_string(), l2),
        ("sigma_sq".to_string(), sigma_sq),
        ("f_sq".to_string(), ss.f_sq),
        ("kappa".to_string(), ss.kappa),
        ("r".to_string(), ss.r),
        ("probability_raw".to_string(), raw),
        ("c0".to_string(), c0),
        ("c1".to_string(), c1),
        ("c2".to_string(), c2),
    ]);
    Ok(BoundReport {
        eta_bound: eta,
        probability_lower_bound: raw.max(0.0),
        delta_free: delta,
        intermediates,
        unresolved: vec!["c0".into(), "c1".into(), "c2".into()],
    })
}

/// Coherent upper bound `1/2 log2(1 + n' / sigma_nu^2)` in bits.
pub fn coherent_simo_capacity(ch: &ChannelSpec) -> Result<f64> {
    let noise = ch.checked_noise()?;
    Ok(0.5 * (ch.n_prime as f64 / noise).ln_1p() / std::f64::consts::LN_2)
}

/// Non-coherent upper bound `n'/2 log2(1 + 1 / sigma_nu^2)` in bits.
pub fn noncoherent_simo_capacity(ch: &ChannelSpec) -> Result<f64> {
    let noise = ch.checked_noise()?;
    Ok(0.5 * ch.n_prime as f64 * (1.0 / noise).ln_1p() / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn summary(singular_values: Vec<f64>, r: f64, f: f64) -> SpectralSummary {
        let sigma_max = singular_values[0];
        let sigma_min = *singular_values.last().unwrap();
        SpectralSummary {
            kappa: sigma_max / sigma_min,
            sigma_max,
            sigma_min,
            r,
            f,
            f_sq: f * f,
            f_per_column: vec![f; singular_values.len()],
            theta_star: DVector::zeros(singular_values.len()),
            singular_values,
            fitted_norm: r,
            residual_norm: 1.0,
        }
    }

    #[test]
    fn wedin_cases() {
        assert_eq!(wedin_perturbation_bound(3.0, 0.0, 2.0).unwrap(), 1.0);
        assert_relative_eq!(wedin_perturbation_bound(1.0, 0.5, 1.0).unwrap(), 3.0);
        assert!(matches!(
            wedin_perturbation_bound(2.0, 0.5, 1.0),
            Err(Error::ConditionViolated(_))
        ));
    }

    #[test]
    fn tail_values() {
        assert_eq!(gaussian_smax_tail(TailQuery::new(10, 2, 0.0).unwrap()), 0.0);
        assert_relative_eq!(
            gaussian_smax_tail(TailQuery::new(10, 2, 2.0).unwrap()),
            1.0 - 2.0 * (-2.0f64).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            gaussian_smax_tail(TailQuery::new(10, 2, 2.0).unwrap()),
            0.7293294335267746,
            epsilon = 1e-15
        );
        assert!(gaussian_smax_tail(TailQuery::new(10, 2, 6.0).unwrap()) >= 1.0 - 4e-8);
        assert!(TailQuery::new(10, 2, -1.0).is_err());
    }

    #[test]
    fn additive_bound_engineered_inputs() {
        // sigma_max = sigma_min = 4 so kappa = 1; choose n, d, eps so Delta = 0.25
        // then delta = 0.25 gives Delta + delta = 0.5 and eta = 3^2 with r = 1.
        let eps = PrivacyBudget::new(0.5).unwrap(); // sigma_an = 1
        let (n, d) = (4usize, 4usize); // sqrt(n) + sqrt(d) = 4
        let ss = summary(vec![16.0, 16.0], 1.0, 0.0);
        let report = additive_noise_bound(&ss, eps, n, d, DeltaChoice::Fixed(0.25)).unwrap();
        assert_relative_eq!(report.get("Delta").unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(report.eta_bound, 9.0, epsilon = 1e-12);
        // t = 16 * 0.25 / 1 = 4
        assert_relative_eq!(
            report.probability_lower_bound,
            1.0 - 2.0 * (-8.0f64).exp(),
            epsilon = 1e-15
        );
        // auto: (1 - 0.25) / 2
        let auto = additive_noise_bound(&ss, eps, n, d, DeltaChoice::Auto).unwrap();
        assert_relative_eq!(auto.delta_free, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn additive_bound_vanishing_noise() {
        let eps = PrivacyBudget::new(60.0).unwrap();
        let ss = summary(vec![10.0, 5.0], 2.0, 0.0);
        let report = additive_noise_bound(&ss, eps, 200, 2, DeltaChoice::Fixed(1e-12)).unwrap();
        assert!((report.eta_bound - 1.0).abs() < 1e-9);
    }

    #[test]
    fn additive_bound_independent_arithmetic() {
        // n = 1000, d = 100, sigma_max = sqrt(1000) * 0.6, kappa = 1.5, r = 0.8, eps = 3
        let (n, d) = (1000usize, 100usize);
        let sigma_max = 1000f64.sqrt() * 0.6;
        let ss = summary(vec![sigma_max, sigma_max / 1.5], 0.8, 0.0);
        let eps = PrivacyBudget::new(3.0).unwrap();
        let report = additive_noise_bound(&ss, eps, n, d, DeltaChoice::Fixed(0.05)).unwrap();

        let sigma_an = (1.0 / 63.0f64).sqrt();
        let big_delta = sigma_an * (1000f64.sqrt() + 10.0) / sigma_max;
        let kd = 1.5 * (big_delta + 0.05);
        let expected = (1.0 + kd / (1.0 - kd) * (1.5 + 0.8)).powi(2);
        let prob = 1.0 - 2.0 * (-(sigma_max * sigma_max) * 0.0025 / (2.0 / 63.0)).exp();
        assert_relative_eq!(report.eta_bound, expected, max_relative = 1e-10);
        assert_relative_eq!(report.probability_lower_bound, prob, max_relative = 1e-10);
    }

    #[test]
    fn additive_bound_condition_violated() {
        let ss = summary(vec![2.0, 1.0], 1.0, 0.0);
        let eps = PrivacyBudget::new(0.5).unwrap();
        assert!(matches!(
            additive_noise_bound(&ss, eps, 100, 2, DeltaChoice::Auto),
            Err(Error::ConditionViolated(_))
        ));
        assert!(matches!(
            additive_noise_bound(&ss, eps, 100, 2, DeltaChoice::Fixed(0.0)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn ridge_bounds() {
        assert_eq!(ridge_relative_bound(3.0, 0.0, 5.0), 1.0);
        assert_eq!(ridge_relative_bound(3.0, f64::INFINITY, 5.0), 6.0);
        assert_relative_eq!(ridge_relative_bound(3.0, 1e15, 5.0), 6.0, epsilon = 1e-12);
        assert_relative_eq!(ridge_relative_bound(1.0, 1.0, 2.0), 2.0);

        assert_relative_eq!(ridge_norm_bound(&[1.0], 1.0, 2.0), 1.0);
        assert_relative_eq!(ridge_norm_bound(&[4.0, 2.0], 0.0, 3.0), 1.5);
        assert_relative_eq!(
            ridge_norm_bound(&[3.0, 1.0], 2.0, 6.0),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn projection_bound_cases() {
        let (l1, l2, eta) = projection_terms(&[1.0], 1.0, 1.0, 0.1);
        assert_relative_eq!(l1, 0.25);
        assert_relative_eq!(l2, 0.5);
        assert_relative_eq!(eta, 3.403125, epsilon = 1e-12);

        // f^2 large: sigma_rp^2 = 0, eta = (1 + delta)^2
        let ss = summary(vec![30.0, 20.0], 3.0, 20.0);
        let eps = PrivacyBudget::new(0.5).unwrap();
        let report = projection_bound(&ss, eps, 50, DeltaChoice::Fixed(0.2), 2).unwrap();
        assert_eq!(report.get("sigma_sq"), Some(0.0));
        assert_eq!(report.get("l1"), Some(0.0));
        assert_eq!(report.get("l2"), Some(0.0));
        assert_relative_eq!(report.eta_bound, 1.44, epsilon = 1e-15);
        assert_eq!(report.unresolved, vec!["c0", "c1", "c2"]);

        let auto = projection_bound(&ss, eps, 50, DeltaChoice::Auto, 2).unwrap();
        assert_relative_eq!(auto.delta_free, (2.0f64 / 50.0).sqrt());
    }

    #[test]
    fn projection_bound_non_increasing_in_budget_when_r_at_most_one() {
        // single singular value: with u = lambda / (s^2 + lambda) the bound is
        // (1 + delta)^2 (1 + r^2 u (1 - u)) (1 + r u)^2, increasing in u for r <= 1
        for r in [0.2, 0.6, 1.0] {
            let ss = summary(vec![6.0], r, 1.0);
            let mut last = f64::INFINITY;
            for i in 1..=60 {
                let eps = PrivacyBudget::new(0.05 * i as f64).unwrap();
                let report = projection_bound(&ss, eps, 40, DeltaChoice::Fixed(0.3), 1).unwrap();
                assert!(
                    report.eta_bound <= last * (1.0 + 1e-12),
                    "r {r} eps {}",
                    0.05 * i as f64
                );
                last = report.eta_bound;
            }
        }
    }

    #[test]
    fn projection_bound_can_grow_with_budget_when_r_exceeds_one() {
        // l1 peaks near lambda = sigma^2, so shrinking the noise can raise the bound
        let ss = summary(vec![6.0], 3.0, 1.0);
        let at = |e: f64| {
            projection_bound(
                &ss,
                PrivacyBudget::new(e).unwrap(),
                40,
                DeltaChoice::Fixed(0.3),
                1,
            )
            .unwrap()
            .eta_bound
        };
        assert!(at(0.2) > at(0.005));
    }

    #[test]
    fn capacity_values() {
        let unit = ChannelSpec::new(1, 1.0, 0.0).unwrap();
        assert_relative_eq!(coherent_simo_capacity(&unit).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(
            coherent_simo_capacity(&unit).unwrap(),
            noncoherent_simo_capacity(&unit).unwrap()
        );
        let ch = ChannelSpec::new(4, 1.0, 2.0).unwrap();
        assert_eq!(ch.sigma_nu_sq, 3.0);
        assert_relative_eq!(
            noncoherent_simo_capacity(&ch).unwrap(),
            2.0 * (4.0f64 / 3.0).log2(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            noncoherent_simo_capacity(&ch).unwrap(),
            0.8300749985576876,
            epsilon = 1e-12
        );
        let silent = ChannelSpec::new(4, 0.0, 0.0).unwrap();
        assert_eq!(
            coherent_simo_capacity(&silent),
            Err(Error::DegenerateChannel)
        );
        assert_eq!(
            noncoherent_simo_capacity(&silent),
            Err(Error::DegenerateChannel)
        );
        let loud = ChannelSpec::new(4, f64::INFINITY, 0.0).unwrap();
        assert_eq!(coherent_simo_capacity(&loud).unwrap(), 0.0);
    }

    #[test]
    fn calibrated_channel_carries_exactly_the_budget() {
        for i in 1..=30 {
            let e = 0.1 * i as f64;
            let eps = PrivacyBudget::new(e).unwrap();
            for n_prime in [1usize, 10, 100] {
                let sigma_sq = calibrate_projection_noise(eps, n_prime, 0.0).unwrap();
                let ch = ChannelSpec::new(n_prime, sigma_sq, 0.0).unwrap();
                let c = coherent_simo_capacity(&ch).unwrap();
                assert!((c - e).abs() <= 1e-12 * e, "eps {e} n' {n_prime}: {c}");
            }
        }
    }
}
