//! Robust meta-analytic-predictive (MAP) priors built from a single pilot
//! study, and their conjugate updating.
//!
//! A robust MAP prior for one arm's success probability is the two-component
//! mixture
//!
//! ```text
//! (1 − w) · Beta(1, 1) + w · Beta(a0 + y_pilot, b0 + n_pilot − y_pilot)
//! ```
//!
//! Updating with binomial data keeps the mixture form. Each component is
//! updated conjugately and the weights are rescaled by the component's
//! beta-binomial marginal likelihood of the new data, so the informative
//! component loses weight when the pilot disagrees with the new trial.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ln_beta, ln_beta_binomial, ln_beta_pdf};

/// Index of the vague component in mixtures built by this module.
pub const VAGUE: usize = 0;
/// Index of the informative (pilot-derived) component.
pub const INFORMATIVE: usize = 1;

/// Successes out of participants for one arm of one study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArmCounts {
    successes: u64,
    size: u64,
}

impl ArmCounts {
    pub fn new(successes: u64, size: u64) -> Result<Self> {
        if successes > size {
            return Err(Error::domain(format!(
                "arm counts need successes <= size, got {successes} of {size}"
            )));
        }
        Ok(ArmCounts { successes, size })
    }

    pub const fn empty() -> Self {
        ArmCounts {
            successes: 0,
            size: 0,
        }
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn failures(&self) -> u64 {
        self.size - self.successes
    }
}

/// Shape pair of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub const UNIFORM: BetaParams = BetaParams {
        alpha: 1.0,
        beta: 1.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(BetaParams { alpha, beta })
        } else {
            Err(Error::domain(format!(
                "Beta shapes must be positive and finite, got ({alpha}, {beta})"
            )))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// ln B(alpha, beta).
    pub fn ln_normalizer(&self) -> f64 {
        ln_beta(self.alpha, self.beta)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        ln_beta_pdf(x, self.alpha, self.beta, self.ln_normalizer())
    }

    /// Posterior shapes after observing `data` under this prior.
    pub fn conjugate_update(&self, data: ArmCounts) -> BetaParams {
        BetaParams {
            alpha: self.alpha + data.successes as f64,
            beta: self.beta + data.failures() as f64,
        }
    }

    /// ln of the beta-binomial marginal likelihood of `data`.
    pub fn ln_marginal(&self, data: ArmCounts) -> f64 {
        ln_beta_binomial(data.successes, data.size, self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub params: BetaParams,
}

/// A finite mixture of Beta distributions with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMixture {
    components: Vec<Component>,
}

impl BetaMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("a mixture needs at least one component"));
        }
        for c in &components {
            if !(0.0..=1.0).contains(&c.weight) {
                return Err(Error::domain(format!(
                    "mixture weight {} outside [0, 1]",
                    c.weight
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(BetaMixture { components })
    }

    pub fn single(params: BetaParams) -> Self {
        BetaMixture {
            components: vec![Component {
                weight: 1.0,
                params,
            }],
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.params.mean())
            .sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight * c.params.ln_pdf(x).exp())
            .sum()
    }
}

/// Settings for building robust MAP priors.
///
/// The vague component is Beta(1, 1) unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustMapSpec {
    /// Prior weight on the informative component.
    pub weight: f64,
    /// Base prior (a0, b0) updated with the pilot counts.
    pub base: BetaParams,
    pub vague: BetaParams,
}

impl Default for RobustMapSpec {
    fn default() -> Self {
        RobustMapSpec {
            weight: 0.5,
            base: BetaParams::UNIFORM,
            vague: BetaParams::UNIFORM,
        }
    }
}

impl RobustMapSpec {
    pub fn with_weight(weight: f64) -> Result<Self> {
        check_weight(weight)?;
        Ok(RobustMapSpec {
            weight,
            ..Default::default()
        })
    }

    pub fn build(&self, pilot: ArmCounts) -> Result<BetaMixture> {
        check_weight(self.weight)?;
        Ok(BetaMixture {
            components: vec![
                Component {
                    weight: 1.0 - self.weight,
                    params: self.vague,
                },
                Component {
                    weight: self.weight,
                    params: self.base.conjugate_update(pilot),
                },
            ],
        })
    }
}

fn check_weight(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "prior weight must lie in [0, 1], got {w}"
        )))
    }
}

/// `(1 − w)·Beta(1,1) + w·Beta(a0 + y, b0 + n − y)` from pilot counts.
pub fn build_robust_map(pilot: ArmCounts, w: f64, a0: f64, b0: f64) -> Result<BetaMixture> {
    RobustMapSpec {
        weight: w,
        base: BetaParams::new(a0, b0)?,
        vague: BetaParams::UNIFORM,
    }
    .build(pilot)
}

/// Conjugate update of every component, with weights rescaled by each
/// component's marginal likelihood of `data` and renormalized.
pub fn update_posterior(prior: &BetaMixture, data: ArmCounts) -> BetaMixture {
    if data.size == 0 {
        return prior.clone();
    }
    let log_w: Vec<f64> = prior
        .components
        .iter()
        .map(|c| c.weight.ln() + c.params.ln_marginal(data))
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let components = prior
        .components
        .iter()
        .zip(scaled)
        .map(|(c, s)| Component {
            weight: s / total,
            params: c.params.conjugate_update(data),
        })
        .collect();
    BetaMixture { components }
}

/// Weight on the informative component of a two-component robust mixture.
pub fn informative_weight(mixture: &BetaMixture) -> Result<f64> {
    if mixture.len() != 2 {
        return Err(Error::domain(format!(
            "expected a two-component robust mixture, got {} components",
            mixture.len()
        )));
    }
    Ok(mixture.components[INFORMATIVE].weight)
}
