//! Posterior superiority probability P(p_T > p_C | data) and the threshold rule.
//!
//! Each component pair is reduced to P(X > Y) = ∫ f_X(x) I_x(c) dx, evaluated
//! by Gauss-Legendre quadrature restricted to where the integrand is not
//! negligible. Outside the effective support of Y the regularized incomplete
//! beta is 0 or 1, so the upper remainder is an exact Beta tail.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{BetaMixture, BetaParams};
use crate::quadrature;
use crate::stats::{inc_beta, inc_beta_upper, ln_beta};

/// Log-density drop from the mode that bounds the effective support.
const SUPPORT_DROP: f64 = 45.0;
/// Successive quadrature orders must agree within this.
const QUAD_TOL: f64 = 1e-9;

/// Declare superiority when the posterior probability strictly exceeds `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    phi: f64,
}

impl DecisionRule {
    pub fn new(phi: f64) -> Result<Self> {
        if phi > 0.0 && phi < 1.0 {
            Ok(DecisionRule { phi })
        } else {
            Err(Error::domain(format!(
                "threshold phi must lie in (0, 1), got {phi}"
            )))
        }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule { phi: 0.975 }
    }
}

pub fn decide(prob: f64, rule: DecisionRule) -> bool {
    prob > rule.phi
}

/// P(X > Y) for independent X ~ Beta(t), Y ~ Beta(c).
pub fn beta_exceedance(t: BetaParams, c: BetaParams) -> f64 {
    let (ta, tb) = (t.alpha(), t.beta());
    let (ca, cb) = (c.alpha(), c.beta());
    let t_lbeta = ln_beta(ta, tb);
    let c_lbeta = ln_beta(ca, cb);

    if ta < 1.0 || tb < 1.0 {
        return singular_exceedance(t, t_lbeta, c, c_lbeta);
    }

    let (t_lo, t_hi) = effective_support(ta, tb);
    let (c_lo, c_hi) = effective_support(ca, cb);

    // Above c_hi the CDF of Y is 1, so that stretch contributes P(X > c_hi).
    let tail = if c_hi < t_hi {
        inc_beta_upper(c_hi.max(t_lo), ta, tb, t_lbeta)
    } else {
        0.0
    };
    let lo = t_lo.max(c_lo);
    let hi = t_hi.min(c_hi);
    let core = if lo < hi {
        quadrature::integrate_adaptive(lo, hi, QUAD_TOL, |x| {
            let ln_pdf = (ta - 1.0) * x.ln() + (tb - 1.0) * (-x).ln_1p() - t_lbeta;
            ln_pdf.exp() * inc_beta(x, ca, cb, c_lbeta)
        })
    } else {
        0.0
    };
    (core + tail).clamp(0.0, 1.0)
}

/// Interval outside which the Beta(a, b) density is below e^-45 of its peak.
/// Requires a, b ≥ 1 for a finite interior bound; otherwise the whole unit
/// interval is returned.
fn effective_support(a: f64, b: f64) -> (f64, f64) {
    if a < 1.0 || b < 1.0 || (a == 1.0 && b == 1.0) {
        return (0.0, 1.0);
    }
    let g = |x: f64| (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p();
    let mode = (a - 1.0) / (a + b - 2.0);
    let target = g(mode) - SUPPORT_DROP;

    let lo = if a == 1.0 {
        0.0
    } else {
        // g increases on (0, mode)
        let (mut l, mut r) = (0.0, mode);
        for _ in 0..200 {
            let m = 0.5 * (l + r);
            if m <= l || m >= r {
                break;
            }
            if g(m) < target {
                l = m;
            } else {
                r = m;
            }
        }
        l
    };
    let hi = if b == 1.0 {
        1.0
    } else {
        let (mut l, mut r) = (mode, 1.0);
        for _ in 0..200 {
            let m = 0.5 * (l + r);
            if m <= l || m >= r {
                break;
            }
            if g(m) < target {
                r = m;
            } else {
                l = m;
            }
        }
        r
    };
    (lo, hi)
}

/// Exceedance when X has a shape below one and an unbounded density at an
/// endpoint. Each half of the unit interval gets the power substitution that
/// cancels the singular factor.
fn singular_exceedance(t: BetaParams, t_lbeta: f64, c: BetaParams, c_lbeta: f64) -> f64 {
    let (a, b) = (t.alpha(), t.beta());
    let (ca, cb) = (c.alpha(), c.beta());
    let cdf = |x: f64| inc_beta(x, ca, cb, c_lbeta);
    let half_ln = 0.5f64.ln();

    let left = if a < 1.0 {
        // x = ½ s^(1/a): f(x) dx = (½)^a / a · (1 − x)^(b−1) / B · ds
        quadrature::integrate_adaptive(0.0, 1.0, QUAD_TOL, |s| {
            let x = 0.5 * s.powf(1.0 / a);
            let ln = a * half_ln - a.ln() + (b - 1.0) * (-x).ln_1p() - t_lbeta;
            ln.exp() * cdf(x)
        })
    } else {
        quadrature::integrate_adaptive(0.0, 0.5, QUAD_TOL, |x| {
            let ln = (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - t_lbeta;
            ln.exp() * cdf(x)
        })
    };
    let right = if b < 1.0 {
        // 1 − x = ½ s^(1/b)
        quadrature::integrate_adaptive(0.0, 1.0, QUAD_TOL, |s| {
            let u = 0.5 * s.powf(1.0 / b);
            let x = 1.0 - u;
            let ln = b * half_ln - b.ln() + (a - 1.0) * x.ln() - t_lbeta;
            ln.exp() * cdf(x)
        })
    } else {
        quadrature::integrate_adaptive(0.5, 1.0, QUAD_TOL, |x| {
            let ln = (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - t_lbeta;
            ln.exp() * cdf(x)
        })
    };
    (left + right).clamp(0.0, 1.0)
}

/// P(p_T > p_C) for independent mixture posteriors: the weight-averaged
/// component-pair exceedances.
pub fn superiority_probability(post_t: &BetaMixture, post_c: &BetaMixture) -> f64 {
    mixture_exceedance(post_t, post_c, beta_exceedance)
}

/// [`superiority_probability`] with pair exceedances memoized in `cache`.
pub fn superiority_probability_cached(
    post_t: &BetaMixture,
    post_c: &BetaMixture,
    cache: &ExceedanceCache,
) -> f64 {
    mixture_exceedance(post_t, post_c, |t, c| cache.get(t, c))
}

fn mixture_exceedance<F>(post_t: &BetaMixture, post_c: &BetaMixture, mut pair: F) -> f64
where
    F: FnMut(BetaParams, BetaParams) -> f64,
{
    let mut total = 0.0;
    for ct in post_t.components().iter().filter(|c| c.weight > 0.0) {
        for cc in post_c.components().iter().filter(|c| c.weight > 0.0) {
            total += ct.weight * cc.weight * pair(ct.params, cc.params);
        }
    }
    total.clamp(0.0, 1.0)
}

/// Memo of [`beta_exceedance`] keyed by the exact shape bits.
///
/// Replicates of one power estimate revisit the same posterior shapes many
/// times (with no pilot, all four component pairs coincide). Values are pure
/// functions of the key, so sharing the memo across workers cannot change a
/// result.
#[derive(Debug, Default)]
pub struct ExceedanceCache {
    map: Mutex<HashMap<[u64; 4], f64>>,
}

impl ExceedanceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, t: BetaParams, c: BetaParams) -> f64 {
        let key = [
            t.alpha().to_bits(),
            t.beta().to_bits(),
            c.alpha().to_bits(),
            c.beta().to_bits(),
        ];
        if let Some(&v) = self.map.lock().expect("cache poisoned").get(&key) {
            return v;
        }
        let v = beta_exceedance(t, c);
        self.map.lock().expect("cache poisoned").insert(key, v);
        v
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
