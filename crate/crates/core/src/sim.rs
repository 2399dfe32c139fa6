//! Monte Carlo simulation of a pilot study followed by a definitive trial.
//!
//! One replicate draws pilot counts for both arms, builds a robust MAP prior
//! per arm from them, draws the definitive trial, updates both posteriors and
//! applies the superiority rule. Power is the fraction of replicates that
//! declare superiority.
//!
//! Every replicate owns a ChaCha8 stream keyed by
//! `(master_seed, n_total, replicate index, purpose)`. ChaCha is a keyed PRF,
//! so streams never overlap and the result of a power estimate depends only
//! on its inputs, never on how replicates are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{decide, superiority_probability_cached, DecisionRule, ExceedanceCache};
use crate::error::{Error, Result};
use crate::prior::{update_posterior, ArmCounts, BetaMixture, RobustMapSpec};
use crate::stats::sample_binomial;

pub const DEFAULT_REPLICATES: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 20_250_101;
pub const DEFAULT_TARGET_POWER: f64 = 0.80;

/// Stream purposes; part of the per-replicate key.
const PURPOSE_SEARCH: u64 = 0;
const PURPOSE_VERIFY: u64 = 1;

/// One cell of the simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignScenario {
    p_control: f64,
    rr_definitive: f64,
    rr_pilot_multiplier: f64,
    pilot_fraction: f64,
    rule: DecisionRule,
    prior: RobustMapSpec,
    replicates: u64,
    master_seed: u64,
}

/// Builder for [`DesignScenario`]; `build` validates every field.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioBuilder {
    inner: DesignScenario,
}

impl DesignScenario {
    pub fn builder(p_control: f64, rr_definitive: f64) -> ScenarioBuilder {
        ScenarioBuilder {
            inner: DesignScenario {
                p_control,
                rr_definitive,
                rr_pilot_multiplier: 1.0,
                pilot_fraction: 0.0,
                rule: DecisionRule::default(),
                prior: RobustMapSpec::default(),
                replicates: DEFAULT_REPLICATES,
                master_seed: DEFAULT_SEED,
            },
        }
    }

    pub fn p_control(&self) -> f64 {
        self.p_control
    }

    /// Treatment success probability in the definitive trial.
    pub fn p_treatment(&self) -> f64 {
        self.rr_definitive * self.p_control
    }

    /// Treatment success probability in the pilot.
    pub fn p_treatment_pilot(&self) -> f64 {
        self.rr_pilot_multiplier * self.rr_definitive * self.p_control
    }

    pub fn rr_definitive(&self) -> f64 {
        self.rr_definitive
    }

    pub fn rr_pilot_multiplier(&self) -> f64 {
        self.rr_pilot_multiplier
    }

    pub fn pilot_fraction(&self) -> f64 {
        self.pilot_fraction
    }

    pub fn rule(&self) -> DecisionRule {
        self.rule
    }

    pub fn prior(&self) -> RobustMapSpec {
        self.prior
    }

    pub fn replicates(&self) -> u64 {
        self.replicates
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// A copy with a different builder applied on top of this scenario.
    pub fn to_builder(&self) -> ScenarioBuilder {
        ScenarioBuilder { inner: *self }
    }

    /// Total pilot participants for a definitive trial of `n_total`.
    pub fn pilot_total(&self, n_total: u64) -> u64 {
        pilot_total(self.pilot_fraction, n_total)
    }
}

impl ScenarioBuilder {
    pub fn rr_pilot_multiplier(mut self, c: f64) -> Self {
        self.inner.rr_pilot_multiplier = c;
        self
    }

    pub fn pilot_fraction(mut self, f: f64) -> Self {
        self.inner.pilot_fraction = f;
        self
    }

    pub fn phi(mut self, phi: f64) -> Result<Self> {
        self.inner.rule = DecisionRule::new(phi)
            .map_err(|_| Error::validation("phi", format!("must lie in (0, 1), got {phi}")))?;
        Ok(self)
    }

    pub fn prior(mut self, prior: RobustMapSpec) -> Self {
        self.inner.prior = prior;
        self
    }

    pub fn weight(mut self, w: f64) -> Self {
        self.inner.prior.weight = w;
        self
    }

    pub fn replicates(mut self, replicates: u64) -> Self {
        self.inner.replicates = replicates;
        self
    }

    pub fn master_seed(mut self, seed: u64) -> Self {
        self.inner.master_seed = seed;
        self
    }

    pub fn build(self) -> Result<DesignScenario> {
        let s = self.inner;
        if !(s.p_control > 0.0 && s.p_control < 1.0) {
            return Err(Error::validation(
                "p_C",
                format!("must lie in (0, 1), got {}", s.p_control),
            ));
        }
        if !(s.rr_definitive > 0.0 && s.rr_definitive.is_finite()) {
            return Err(Error::validation(
                "rr",
                format!("must be positive, got {}", s.rr_definitive),
            ));
        }
        if !(s.rr_pilot_multiplier > 0.0 && s.rr_pilot_multiplier.is_finite()) {
            return Err(Error::validation(
                "rr_pilot_multiplier",
                format!("must be positive, got {}", s.rr_pilot_multiplier),
            ));
        }
        if !(0.0..1.0).contains(&s.pilot_fraction) {
            return Err(Error::validation(
                "pilot_fraction",
                format!("must lie in [0, 1), got {}", s.pilot_fraction),
            ));
        }
        if !(0.0..=1.0).contains(&s.prior.weight) {
            return Err(Error::validation(
                "w",
                format!("must lie in [0, 1], got {}", s.prior.weight),
            ));
        }
        if s.replicates == 0 {
            return Err(Error::validation("replicates", "must be at least 1"));
        }
        if s.p_treatment() > 1.0 {
            return Err(Error::Infeasible(format!(
                "p_T = RR * p_C = {} * {} exceeds 1",
                s.rr_definitive, s.p_control
            )));
        }
        if s.p_treatment_pilot() > 1.0 {
            return Err(Error::Infeasible(format!(
                "pilot p_T = c * RR * p_C = {} * {} * {} exceeds 1",
                s.rr_pilot_multiplier, s.rr_definitive, s.p_control
            )));
        }
        Ok(s)
    }
}

/// 1:1 allocation; an odd participant goes to control.
pub fn split_arms(total: u64) -> (u64, u64) {
    (total.div_ceil(2), total / 2)
}

/// `f · n_total` rounded to the nearest integer, halves away from zero.
pub fn pilot_total(fraction: f64, n_total: u64) -> u64 {
    (fraction * n_total as f64).round() as u64
}

/// Deterministic stream for one replicate.
pub fn replicate_stream(master_seed: u64, n_total: u64, replicate: u64) -> ChaCha8Rng {
    keyed_stream(master_seed, n_total, replicate, PURPOSE_SEARCH)
}

fn keyed_stream(master_seed: u64, n_total: u64, replicate: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&n_total.to_le_bytes());
    key[16..24].copy_from_slice(&replicate.to_le_bytes());
    key[24..32].copy_from_slice(&purpose.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Everything one replicate computed, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateTrace {
    pub n_total: u64,
    pub pilot_control: ArmCounts,
    pub pilot_treatment: ArmCounts,
    pub prior_control: BetaMixture,
    pub prior_treatment: BetaMixture,
    pub definitive_control: ArmCounts,
    pub definitive_treatment: ArmCounts,
    pub posterior_control: BetaMixture,
    pub posterior_treatment: BetaMixture,
    pub superiority_probability: f64,
    pub decision: bool,
}

/// Runs one replicate with full bookkeeping.
///
/// Draw order on the stream: pilot control, pilot treatment, definitive
/// control, definitive treatment.
pub fn trace_replicate(
    scenario: &DesignScenario,
    n_total: u64,
    rng: &mut ChaCha8Rng,
) -> Result<ReplicateTrace> {
    trace_replicate_cached(scenario, n_total, rng, &ExceedanceCache::new())
}

fn trace_replicate_cached(
    scenario: &DesignScenario,
    n_total: u64,
    rng: &mut ChaCha8Rng,
    cache: &ExceedanceCache,
) -> Result<ReplicateTrace> {
    if n_total < 2 {
        return Err(Error::domain(format!(
            "a definitive trial needs at least 2 participants, got {n_total}"
        )));
    }
    let (pilot_nc, pilot_nt) = split_arms(scenario.pilot_total(n_total));
    let pilot_control = draw(pilot_nc, scenario.p_control, rng)?;
    let pilot_treatment = draw(pilot_nt, scenario.p_treatment_pilot(), rng)?;
    let prior_control = scenario.prior.build(pilot_control)?;
    let prior_treatment = scenario.prior.build(pilot_treatment)?;

    let (nc, nt) = split_arms(n_total);
    let definitive_control = draw(nc, scenario.p_control, rng)?;
    let definitive_treatment = draw(nt, scenario.p_treatment(), rng)?;
    let posterior_control = update_posterior(&prior_control, definitive_control);
    let posterior_treatment = update_posterior(&prior_treatment, definitive_treatment);

    let prob = superiority_probability_cached(&posterior_treatment, &posterior_control, cache);
    Ok(ReplicateTrace {
        n_total,
        pilot_control,
        pilot_treatment,
        prior_control,
        prior_treatment,
        definitive_control,
        definitive_treatment,
        posterior_control,
        posterior_treatment,
        superiority_probability: prob,
        decision: decide(prob, scenario.rule),
    })
}

fn draw(n: u64, p: f64, rng: &mut ChaCha8Rng) -> Result<ArmCounts> {
    ArmCounts::new(sample_binomial(n, p, rng)?, n)
}

/// Whether one simulated trial declares superiority.
pub fn simulate_replicate(
    scenario: &DesignScenario,
    n_total: u64,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    trace_replicate(scenario, n_total, rng).map(|t| t.decision)
}

/// Fraction of successful replicates and its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub power: f64,
    pub standard_error: f64,
    pub replicates: u64,
    pub n_total: u64,
}

impl PowerEstimate {
    fn from_count(successes: u64, replicates: u64, n_total: u64) -> Self {
        let power = successes as f64 / replicates as f64;
        PowerEstimate {
            power,
            standard_error: (power * (1.0 - power) / replicates as f64).sqrt(),
            replicates,
            n_total,
        }
    }
}

/// Monte Carlo power at `n_total`, run on the current rayon pool.
pub fn estimate_power(scenario: &DesignScenario, n_total: u64) -> Result<PowerEstimate> {
    power_with_purpose(scenario, n_total, PURPOSE_SEARCH)
}

fn power_with_purpose(
    scenario: &DesignScenario,
    n_total: u64,
    purpose: u64,
) -> Result<PowerEstimate> {
    let replicates = scenario.replicates;
    let cache = ExceedanceCache::new();
    let successes = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_stream(scenario.master_seed, n_total, i, purpose);
            trace_replicate_cached(scenario, n_total, &mut rng, &cache)
                .map(|t| u64::from(t.decision))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(PowerEstimate::from_count(successes, replicates, n_total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeResult {
    /// Definitive-trial total, both arms.
    pub n_total: u64,
    /// Pilot total, both arms.
    pub pilot_total: u64,
    /// Power at `n_total` re-estimated on streams independent of the search.
    pub power_at_n: PowerEstimate,
    /// The estimate the search itself accepted (≥ target by construction).
    pub search_power: PowerEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SearchOutcome {
    Found(SampleSizeResult),
    /// Even the largest total in range missed the target.
    Unreachable {
        n_hi: u64,
        power_at_n_hi: PowerEstimate,
    },
}

impl SearchOutcome {
    pub fn found(&self) -> Option<&SampleSizeResult> {
        match self {
            SearchOutcome::Found(r) => Some(r),
            SearchOutcome::Unreachable { .. } => None,
        }
    }
}

/// Smallest even `n_total` in `[n_lo, n_hi]` whose estimated power reaches
/// `target_power`, assuming power grows with `n_total`.
///
/// The range is bracketed by doubling from `n_lo`, then bisected over even
/// totals. The returned total is re-estimated with an independent stream
/// family.
pub fn find_min_sample_size(
    scenario: &DesignScenario,
    target_power: f64,
    n_lo: u64,
    n_hi: u64,
) -> Result<SearchOutcome> {
    if !(target_power > 0.0 && target_power < 1.0) {
        return Err(Error::validation(
            "target_power",
            format!("must lie in (0, 1), got {target_power}"),
        ));
    }
    if n_lo < 2 || !n_lo.is_multiple_of(2) || !n_hi.is_multiple_of(2) || n_lo >= n_hi {
        return Err(Error::validation(
            "search range",
            format!("need even 2 <= n_lo < n_hi, got [{n_lo}, {n_hi}]"),
        ));
    }
    let mut last_estimate = None;
    let found = search_even(n_lo, n_hi, target_power, |n| {
        let est = estimate_power(scenario, n)?;
        last_estimate = Some(est);
        Ok(est)
    })?;
    match found {
        Some((n_total, search_power)) => Ok(SearchOutcome::Found(SampleSizeResult {
            n_total,
            pilot_total: scenario.pilot_total(n_total),
            power_at_n: power_with_purpose(scenario, n_total, PURPOSE_VERIFY)?,
            search_power,
        })),
        None => Ok(SearchOutcome::Unreachable {
            n_hi,
            power_at_n_hi: last_estimate.expect("n_hi is always probed before giving up"),
        }),
    }
}

/// Doubling then bisection over even totals. Returns the first passing total
/// and the estimate that passed it.
pub(crate) fn search_even<F>(
    n_lo: u64,
    n_hi: u64,
    target: f64,
    mut probe: F,
) -> Result<Option<(u64, PowerEstimate)>>
where
    F: FnMut(u64) -> Result<PowerEstimate>,
{
    let first = probe(n_lo)?;
    if first.power >= target {
        return Ok(Some((n_lo, first)));
    }
    let mut fail = n_lo;
    let (mut pass, mut pass_est) = loop {
        let next = (fail * 2).min(n_hi);
        let est = probe(next)?;
        if est.power >= target {
            break (next, est);
        }
        if next == n_hi {
            return Ok(None);
        }
        fail = next;
    };
    while pass - fail > 2 {
        let mid = fail + ((pass - fail) / 4 * 2).max(2);
        let est = probe(mid)?;
        if est.power >= target {
            pass = mid;
            pass_est = est;
        } else {
            fail = mid;
        }
    }
    Ok(Some((pass, pass_est)))
}

/// Minimal sample sizes as the pilot treatment effect shrinks to `c · RR`.
pub fn run_conflict_grid(
    base: &DesignScenario,
    multipliers: &[f64],
    target_power: f64,
    n_lo: u64,
    n_hi: u64,
) -> Result<Vec<SearchOutcome>> {
    multipliers
        .iter()
        .map(|&c| {
            let scenario = base.to_builder().rr_pilot_multiplier(c).build()?;
            find_min_sample_size(&scenario, target_power, n_lo, n_hi)
        })
        .collect()
}

/// Worker count for a rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    #[default]
    Auto,
    Fixed(usize),
}

/// Runs `f` on a dedicated pool of the requested size.
pub fn with_workers<T, F>(workers: Workers, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Workers::Fixed(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    Ok(builder.build()?.install(f))
}
