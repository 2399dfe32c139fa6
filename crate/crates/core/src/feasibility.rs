//! Expected trial duration and the Gamma-Poisson recruitment model.
//!
//! The monthly accrual rate is uncertain: λ ~ Gamma(shape 2λ₀, rate 2), which
//! has mean λ₀ and variance λ₀/2. Recruits over `m` months are Poisson(λm)
//! given λ, so marginally N ~ NegBin(r = 2λ₀, p = 2/(2 + m)) and
//! P(N ≥ n) = I_{1−p}(n, r).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{inc_beta, ln_beta};

/// Resolution of [`months_for_probability`].
pub const MONTH_RESOLUTION: f64 = 0.01;

const GAMMA_RATE: f64 = 2.0;

/// Whether recruitment rates and sample sizes count both arms or one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBasis {
    /// λ counts all recruits per month; n is the trial total.
    #[default]
    Total,
    /// λ counts recruits per arm per month; n is the larger (control) arm.
    PerArm,
}

impl RateBasis {
    /// The recruit count a rate of this basis has to reach.
    pub fn recruits_needed(self, n_total: u64) -> u64 {
        match self {
            RateBasis::Total => n_total,
            RateBasis::PerArm => n_total.div_ceil(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecruitmentModel {
    lambda0: f64,
}

impl RecruitmentModel {
    pub fn new(lambda0: f64) -> Result<Self> {
        if lambda0 > 0.0 && lambda0.is_finite() {
            Ok(RecruitmentModel { lambda0 })
        } else {
            Err(Error::domain(format!(
                "recruitment rate must be positive, got {lambda0}"
            )))
        }
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn gamma_shape(&self) -> f64 {
        GAMMA_RATE * self.lambda0
    }

    pub fn gamma_rate(&self) -> f64 {
        GAMMA_RATE
    }

    pub fn rate_mean(&self) -> f64 {
        self.gamma_shape() / self.gamma_rate()
    }

    pub fn rate_variance(&self) -> f64 {
        self.gamma_shape() / (self.gamma_rate() * self.gamma_rate())
    }
}

/// Months to accrue `n` participants at `lambda` per month.
pub fn expected_duration(n: u64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!(
            "recruitment rate must be positive, got {lambda}"
        )));
    }
    Ok(n as f64 / lambda)
}

/// Whole months for display, halves away from zero.
pub fn display_months(months: f64) -> i64 {
    months.round() as i64
}

/// Negative-binomial (r, p) for the recruits in `m` months.
pub fn negbin_params(model: &RecruitmentModel, m: f64) -> Result<(f64, f64)> {
    check_months(m)?;
    Ok((model.gamma_shape(), GAMMA_RATE / (GAMMA_RATE + m)))
}

fn check_months(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "duration must be positive, got {m} months"
        )))
    }
}

/// P(N ≥ n) for the recruits N accrued within `m` months.
pub fn recruitment_probability(model: &RecruitmentModel, n: u64, m: f64) -> Result<f64> {
    check_months(m)?;
    if n == 0 {
        return Ok(1.0);
    }
    let r = model.gamma_shape();
    let a = n as f64;
    // 1 − p = m / (2 + m), formed directly to keep precision at small m.
    let q = m / (GAMMA_RATE + m);
    Ok(inc_beta(q, a, r, ln_beta(a, r)))
}

/// Smallest duration, on a 0.01-month grid, at which recruiting `n` has
/// probability at least `target`.
pub fn months_for_probability(model: &RecruitmentModel, n: u64, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::domain(format!(
            "target probability must lie in (0, 1), got {target}"
        )));
    }
    let months = |k: u64| k as f64 * MONTH_RESOLUTION;
    let reaches = |k: u64| recruitment_probability(model, n, months(k)).map(|p| p >= target);

    if reaches(1)? {
        return Ok(months(1));
    }
    let mut fail = 1u64;
    let mut pass = 2u64;
    while !reaches(pass)? {
        fail = pass;
        pass = pass.checked_mul(2).ok_or_else(|| {
            Error::domain("recruitment target not reached within representable durations")
        })?;
    }
    while pass - fail > 1 {
        let mid = fail + (pass - fail) / 2;
        if reaches(mid)? {
            pass = mid;
        } else {
            fail = mid;
        }
    }
    Ok(months(pass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ln_gamma;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Poisson};

    fn model(l: f64) -> RecruitmentModel {
        RecruitmentModel::new(l).unwrap()
    }

    fn ln_negbin_pmf(k: u64, r: f64, p: f64) -> f64 {
        let k = k as f64;
        ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0) + r * p.ln() + k * (-p).ln_1p()
    }

    #[test]
    fn duration_examples() {
        let d = expected_duration(846, 10.0).unwrap();
        assert!((d - 84.6).abs() < 1e-12);
        assert_eq!(display_months(d), 85);
        let d = expected_duration(206, 5.0).unwrap();
        assert!((d - 41.2).abs() < 1e-12);
        assert_eq!(display_months(d), 41);
        assert_eq!(expected_duration(100, 10.0).unwrap(), 10.0);
        assert!(expected_duration(10, 0.0).is_err());
        assert!(expected_duration(10, -2.0).is_err());
    }

    #[test]
    fn model_moments() {
        let m = model(5.0);
        assert_eq!(m.gamma_shape(), 10.0);
        assert_eq!(m.rate_mean(), 5.0);
        assert_eq!(m.rate_variance(), 2.5);
        assert!(RecruitmentModel::new(0.0).is_err());
    }

    #[test]
    fn negbin_examples() {
        assert_eq!(negbin_params(&model(5.0), 2.0).unwrap(), (10.0, 0.5));
        let (r, p) = negbin_params(&model(2.0), 46.0).unwrap();
        assert_eq!(r, 4.0);
        assert!((p - 2.0 / 48.0).abs() < 1e-15);
        let (_, p) = negbin_params(&model(10.0), 1e-12).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(negbin_params(&model(10.0), 0.0).is_err());
    }

    #[test]
    fn zero_recruits_always_reached() {
        for m in [0.01, 1.0, 100.0] {
            assert_eq!(recruitment_probability(&model(3.0), 0, m).unwrap(), 1.0);
        }
    }

    #[test]
    fn survival_complements_pmf_sum() {
        for (l, n, m) in [
            (2.0, 50u64, 12.0),
            (5.0, 230, 46.0),
            (10.0, 800, 96.0),
            (2.5, 4000, 900.0),
        ] {
            let mdl = model(l);
            let (r, p) = negbin_params(&mdl, m).unwrap();
            let below: f64 = (0..n).map(|k| ln_negbin_pmf(k, r, p).exp()).sum();
            let surv = recruitment_probability(&mdl, n, m).unwrap();
            assert!(
                (surv + below - 1.0).abs() < 1e-10,
                "({l},{n},{m}): {surv} + {below}"
            );
        }
    }

    #[test]
    fn negbin_mean_is_rate_times_months() {
        for (l, m) in [(2.0, 12.0), (5.0, 24.0), (10.0, 48.0)] {
            let (r, p) = negbin_params(&model(l), m).unwrap();
            let upper = (20.0 * l * m) as u64;
            let mean: f64 = (0..=upper)
                .map(|k| k as f64 * ln_negbin_pmf(k, r, p).exp())
                .sum();
            assert!(
                (mean / (l * m) - 1.0).abs() < 1e-3,
                "mean {mean} vs {}",
                l * m
            );
        }
    }

    #[test]
    fn matches_gamma_poisson_sampling() {
        let mdl = model(5.0);
        let draws = 1_000_000;
        let gamma = Gamma::new(10.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let hits = (0..draws)
            .filter(|_| {
                let lambda: f64 = gamma.sample(&mut rng);
                let n: f64 = Poisson::new(46.0 * lambda).unwrap().sample(&mut rng);
                n >= 230.0
            })
            .count();
        let est = hits as f64 / draws as f64;
        let se = (est * (1.0 - est) / draws as f64).sqrt();
        let got = recruitment_probability(&mdl, 230, 46.0).unwrap();
        assert!((got - est).abs() < 3.0 * se, "{got} vs {est} ± {se}");
    }

    #[test]
    fn months_resolution_floor() {
        assert_eq!(months_for_probability(&model(5.0), 0, 0.9).unwrap(), 0.01);
        assert!(months_for_probability(&model(5.0), 10, 1.0).is_err());
    }

    #[test]
    fn months_inverse_matches_arrival_time_quantile() {
        // N(m) >= n exactly when the n-th arrival T_n <= m, and given λ,
        // T_n ~ Gamma(n, rate λ). The 0.83 quantile of T_n is the inverse.
        let mdl = model(5.0);
        let gamma = Gamma::new(10.0, 0.5).unwrap();
        let arrival = Gamma::new(230.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let mut times: Vec<f64> = (0..200_000)
            .map(|_| {
                let lambda: f64 = gamma.sample(&mut rng);
                let t: f64 = arrival.sample(&mut rng);
                t / lambda
            })
            .collect();
        times.sort_by(f64::total_cmp);
        let oracle = times[(0.83 * times.len() as f64) as usize];
        let got = months_for_probability(&mdl, 230, 0.83).unwrap();
        assert!((got - oracle).abs() < 0.25, "{got} vs {oracle}");
    }

    proptest! {
        #[test]
        fn months_round_trip(l in 0.5f64..20.0, n in 1u64..600, t in 0.05f64..0.95) {
            let mdl = model(l);
            let m = months_for_probability(&mdl, n, t).unwrap();
            prop_assert!(recruitment_probability(&mdl, n, m).unwrap() >= t);
            if m > MONTH_RESOLUTION {
                let before = ((m / MONTH_RESOLUTION).round() as u64 - 1) as f64 * MONTH_RESOLUTION;
                prop_assert!(recruitment_probability(&mdl, n, before).unwrap() < t);
            }
        }

        #[test]
        fn probability_monotone(l in 0.5f64..20.0, n in 1u64..600, m in 0.1f64..200.0, dm in 0.0f64..50.0) {
            let mdl = model(l);
            let p = recruitment_probability(&mdl, n, m).unwrap();
            prop_assert!(recruitment_probability(&mdl, n, m + dm).unwrap() >= p - 1e-12);
            prop_assert!(recruitment_probability(&mdl, n + 1, m).unwrap() <= p + 1e-12);
        }

        #[test]
        fn duration_times_rate_is_n(n in 0u64..100_000, l in 0.01f64..100.0) {
            let d = expected_duration(n, l).unwrap();
            prop_assert!((d * l - n as f64).abs() <= 1e-9 * (n as f64).max(1.0));
        }
    }
}
