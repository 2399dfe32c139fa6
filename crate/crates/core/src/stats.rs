//! Special functions and the binomial sampler used by the rest of the crate.
//!
//! Everything that touches a likelihood works on the natural-log scale.
//! Posterior shapes reach the low thousands (n ≈ 1400 per trial plus pilot),
//! where linear-space Beta functions underflow long before the answer does.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// A natural-log-scale magnitude.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogValue(pub f64);

impl LogValue {
    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        self.0.exp()
    }
}

impl From<LogValue> for f64 {
    fn from(v: LogValue) -> f64 {
        v.0
    }
}

/// ln Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<LogValue> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(LogValue(ln_gamma(x)))
}

/// ln B(a, b).
pub fn log_beta_fn(a: f64, b: f64) -> Result<LogValue> {
    check_shape("log_beta_fn", a, b)?;
    Ok(LogValue(ln_beta(a, b)))
}

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    check_shape("reg_inc_beta", a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!(
            "reg_inc_beta requires 0 <= x <= 1, got {x}"
        )));
    }
    Ok(inc_beta(x, a, b, ln_beta(a, b)))
}

/// ln P(Y = y) for Y ~ BetaBinomial(n, a, b): the marginal likelihood of `y`
/// successes in `n` trials under a Beta(a, b) prior, binomial coefficient
/// included.
pub fn log_beta_binomial_pmf(y: u64, n: u64, a: f64, b: f64) -> Result<LogValue> {
    check_shape("log_beta_binomial_pmf", a, b)?;
    if y > n {
        return Err(Error::domain(format!(
            "log_beta_binomial_pmf requires y <= n, got y = {y}, n = {n}"
        )));
    }
    Ok(LogValue(ln_beta_binomial(y, n, a, b)))
}

/// Draws from Binomial(n, p).
///
/// Degenerate cases (`n = 0`, `p = 0`, `p = 1`) consume no stream state.
pub fn sample_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "sample_binomial requires 0 <= p <= 1, got {p}"
        )));
    }
    if n == 0 || p == 0.0 {
        return Ok(0);
    }
    if p == 1.0 {
        return Ok(n);
    }
    let dist = Binomial::new(n, p).map_err(|e| Error::domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

fn check_shape(op: &str, a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{op} requires positive finite shapes, got a = {a}, b = {b}"
        )))
    }
}

/// δ(x) = ln Γ(x) − [(x − ½) ln x − x + ½ ln 2π], valid for x ≥ 10.
fn stirling_correction(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0 + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360_360.0))))))
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x >= 10.0 {
        return (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_correction(x);
    }
    // Shift up into the Stirling range: Γ(x) = Γ(x + k) / (x (x+1) ... (x+k-1)).
    let mut shifted = x;
    let mut prod = 1.0;
    while shifted < 10.0 {
        prod *= shifted;
        shifted += 1.0;
    }
    ln_gamma(shifted) - prod.ln()
}

/// ln B(a, b) with the large-argument cancellation handled explicitly.
/// Arguments are ordered first, so the result is exactly symmetric.
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    let (p, q) = if a <= b { (a, b) } else { (b, a) };
    let s = p + q;
    if p >= 10.0 {
        let corr = stirling_correction(p) + stirling_correction(q) - stirling_correction(s);
        -0.5 * q.ln() + HALF_LN_2PI + corr + (p - 0.5) * (p / s).ln() + q * (-p / s).ln_1p()
    } else if q >= 10.0 {
        let corr = stirling_correction(q) - stirling_correction(s);
        ln_gamma(p) + corr + p - p * s.ln() + (q - 0.5) * (-p / s).ln_1p()
    } else {
        ln_gamma(p) + ln_gamma(q) - ln_gamma(s)
    }
}

pub(crate) fn ln_beta_binomial(y: u64, n: u64, a: f64, b: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (y, n) = (y as f64, n as f64);
    // ln C(n, y) = -ln(n + 1) - ln B(y + 1, n - y + 1)
    let ln_choose = -(n + 1.0).ln() - ln_beta(y + 1.0, n - y + 1.0);
    ln_choose + ln_beta(a + y, b + n - y) - ln_beta(a, b)
}

/// I_x(a, b) given a precomputed ln B(a, b).
pub(crate) fn inc_beta(x: f64, a: f64, b: f64, lbeta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - inc_beta_front(1.0 - x, b, a, lbeta) * beta_cf(1.0 - x, b, a)
    } else {
        inc_beta_front(x, a, b, lbeta) * beta_cf(x, a, b)
    }
}

/// 1 − I_x(a, b) without the cancellation of the naive complement.
pub(crate) fn inc_beta_upper(x: f64, a: f64, b: f64, lbeta: f64) -> f64 {
    inc_beta(1.0 - x, b, a, lbeta)
}

fn inc_beta_front(x: f64, a: f64, b: f64, lbeta: f64) -> f64 {
    (a * x.ln() + b * (-x).ln_1p() - lbeta - a.ln()).exp()
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 4.0 * f64::EPSILON;
    const MAX_ITER: usize = 100_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// ln of the Beta(a, b) density at x in (0, 1), given ln B(a, b).
#[inline]
pub(crate) fn ln_beta_pdf(x: f64, a: f64, b: f64, lbeta: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - lbeta
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn log_gamma_trivial_values() {
        assert!(close(log_gamma(1.0).unwrap().ln(), 0.0, 1e-14));
        assert!(close(log_gamma(5.0).unwrap().ln(), 24f64.ln(), 1e-13));
        assert!(close(log_gamma(0.5).unwrap().ln(), 0.5 * PI.ln(), 1e-14));
        assert!(close(log_gamma(2.0).unwrap().ln(), 0.0, 1e-14));
    }

    #[test]
    fn log_gamma_reference_values() {
        // Frozen from a 40-digit arbitrary-precision evaluation.
        let cases = [
            (0.001, 6.907_178_885_383_853_7),
            (0.1, 2.252_712_651_734_206),
            (0.5, 0.572_364_942_924_700_1),
            (1.5, -0.120_782_237_635_245_22),
            (7.25, 7.052_185_450_738_539_4),
            (33.3, 82.603_723_581_654_95),
            (1000.5, 5_908.674_175_848_677_5),
        ];
        for (x, want) in cases {
            let got = log_gamma(x).unwrap().ln();
            assert!(close(got, want, 1e-12), "lgamma({x}) = {got}, want {want}");
        }
        // Beyond ~1e4 the magnitude alone exceeds what f64 can resolve to 1e-12.
        for (x, want) in [
            (123_456.7, 1_323_900.975_390_918_3),
            (1e6, 12_815_504.569_147_612),
        ] {
            let got = log_gamma(x).unwrap().ln();
            assert!(((got - want) / want).abs() < 4e-16, "lgamma({x}) = {got}");
        }
    }

    #[test]
    fn log_gamma_matches_factorial_sums() {
        let mut ln_fact = 0.0;
        for n in 1..=170u32 {
            // ln Γ(n) = ln (n-1)!
            let got = ln_gamma(n as f64);
            assert!(close(got, ln_fact, 1e-12 * ln_fact.max(1.0)), "n = {n}");
            ln_fact += (n as f64).ln();
        }
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-2.5).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn log_beta_trivial_values() {
        assert!(close(log_beta_fn(1.0, 1.0).unwrap().ln(), 0.0, 1e-14));
        assert!(close(
            log_beta_fn(2.0, 3.0).unwrap().ln(),
            (1.0f64 / 12.0).ln(),
            1e-14
        ));
        assert!(close(log_beta_fn(0.5, 0.5).unwrap().ln(), PI.ln(), 1e-14));
        assert!(log_beta_fn(0.0, 1.0).is_err());
        assert!(log_beta_fn(1.0, -1.0).is_err());
    }

    #[test]
    fn log_beta_large_arguments_agree_with_gamma_route() {
        for &(a, b) in &[
            (12.0, 15.0),
            (3.0, 800.0),
            (700.5, 300.25),
            (1400.0, 1400.0),
        ] {
            let direct = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            let got = ln_beta(a, b);
            assert!(close(got, direct, 1e-9), "({a},{b}): {got} vs {direct}");
        }
    }

    #[test]
    fn reg_inc_beta_trivial_values() {
        assert!(close(reg_inc_beta(0.5, 1.0, 1.0).unwrap(), 0.5, 1e-15));
        for x in [0.0, 0.01, 0.3, 0.77, 1.0] {
            assert!(close(reg_inc_beta(x, 1.0, 1.0).unwrap(), x, 1e-15));
        }
        assert!(close(reg_inc_beta(0.25, 2.0, 2.0).unwrap(), 0.15625, 1e-15));
        assert_eq!(reg_inc_beta(0.0, 3.0, 4.0).unwrap(), 0.0);
        assert_eq!(reg_inc_beta(1.0, 3.0, 4.0).unwrap(), 1.0);
    }

    #[test]
    fn reg_inc_beta_rejects_bad_arguments() {
        assert!(reg_inc_beta(-0.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(1.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn reg_inc_beta_reference_values() {
        let cases = [
            (0.2, 31.0, 91.0, 0.079_037_648_347_780_5),
            (0.7, 700.5, 300.25, 0.497_018_506_223_915_85),
            (0.3, 0.5, 2.5, 0.796_889_336_279_945_05),
        ];
        for (x, a, b, want) in cases {
            let got = reg_inc_beta(x, a, b).unwrap();
            assert!(
                close(got, want, 1e-12),
                "I_{x}({a},{b}) = {got}, want {want}"
            );
        }
    }

    /// For integer shapes, I_x(a, b) = P(Binomial(a + b - 1, x) >= a).
    fn binomial_tail_oracle(x: f64, a: u32, b: u32) -> f64 {
        let n = a + b - 1;
        let mut total = 0.0;
        for j in a..=n {
            let mut coef = 1.0f64;
            for k in 0..j {
                coef *= (n - k) as f64 / (j - k) as f64;
            }
            total += coef * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
        }
        total
    }

    #[test]
    fn reg_inc_beta_matches_binomial_tail_for_integer_shapes() {
        for a in [1u32, 2, 5, 13, 30] {
            for b in [1u32, 3, 8, 21, 30] {
                for x in [0.05, 0.2, 0.5, 0.61, 0.9] {
                    let want = binomial_tail_oracle(x, a, b);
                    let got = reg_inc_beta(x, a as f64, b as f64).unwrap();
                    assert!(close(got, want, 1e-10), "I_{x}({a},{b}) = {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn beta_binomial_trivial_values() {
        for n in [0u64, 1, 7, 40] {
            for y in 0..=n {
                let got = log_beta_binomial_pmf(y, n, 1.0, 1.0).unwrap().ln();
                assert!(close(got, -((n + 1) as f64).ln(), 1e-12));
            }
        }
        assert_eq!(log_beta_binomial_pmf(0, 0, 3.5, 2.0).unwrap().ln(), 0.0);
        assert!(log_beta_binomial_pmf(4, 3, 1.0, 1.0).is_err());
    }

    /// Composite Simpson integration of C(n,y) p^y (1-p)^(n-y) Beta(p; a, b)
    /// with the Beta normalizer taken from exact factorials.
    fn beta_binomial_quadrature(y: u32, n: u32, a: u32, b: u32) -> f64 {
        let fact = |k: u32| (1..=k).map(|i| i as f64).product::<f64>();
        let choose = fact(n) / (fact(y) * fact(n - y));
        let beta_ab = fact(a - 1) * fact(b - 1) / fact(a + b - 1);
        let f = |p: f64| {
            choose * p.powi((y + a - 1) as i32) * (1.0 - p).powi((n - y + b - 1) as i32) / beta_ab
        };
        let m = 20_000;
        let h = 1.0 / m as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..m {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn beta_binomial_matches_quadrature() {
        let want = beta_binomial_quadrature(3, 10, 6, 16);
        let got = log_beta_binomial_pmf(3, 10, 6.0, 16.0).unwrap().exp();
        assert!(close(got, want, 1e-12), "{got} vs {want}");
        // Arbitrary-precision reference for the same point.
        assert!(close(got.ln(), -1.535_571_784_098_820_1, 1e-12));
    }

    #[test]
    fn binomial_degenerate_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_binomial(50, 0.0, &mut rng).unwrap(), 0);
        assert_eq!(sample_binomial(50, 1.0, &mut rng).unwrap(), 50);
        assert_eq!(sample_binomial(0, 0.4, &mut rng).unwrap(), 0);
        assert!(sample_binomial(5, 1.5, &mut rng).is_err());
    }

    #[test]
    fn binomial_empirical_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_250_101);
        let draws = 1_000_000;
        let total: u64 = (0..draws)
            .map(|_| sample_binomial(100, 0.25, &mut rng).unwrap())
            .sum();
        let mean = total as f64 / draws as f64;
        assert!(close(mean, 25.0, 0.05), "mean = {mean}");
    }

    #[test]
    fn binomial_stream_is_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..200)
                .map(|i| sample_binomial(10 + i, 0.3, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn beta_binomial_sums_to_one(a in 0.05f64..50.0, b in 0.05f64..50.0, n in 0u64..=50) {
            let total: f64 = (0..=n).map(|y| ln_beta_binomial(y, n, a, b).exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-10, "sum = {}", total);
        }

        #[test]
        fn reg_inc_beta_reflection(x in 0.0f64..=1.0, a in 0.1f64..2000.0, b in 0.1f64..2000.0) {
            let lhs = reg_inc_beta(x, a, b).unwrap() + reg_inc_beta(1.0 - x, b, a).unwrap();
            prop_assert!((lhs - 1.0).abs() < 1e-10);
        }

        #[test]
        fn reg_inc_beta_nondecreasing(x in 0.0f64..1.0, dx in 0.0f64..0.2, a in 0.1f64..500.0, b in 0.1f64..500.0) {
            let hi = (x + dx).min(1.0);
            prop_assert!(reg_inc_beta(hi, a, b).unwrap() >= reg_inc_beta(x, a, b).unwrap() - 1e-15);
        }

        #[test]
        fn log_beta_is_symmetric(a in 1e-3f64..1e5, b in 1e-3f64..1e5) {
            prop_assert_eq!(ln_beta(a, b), ln_beta(b, a));
        }
    }
}
