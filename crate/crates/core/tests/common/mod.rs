//! Reference computations that share no code with the library: direct
//! quadrature of unnormalized densities and plain Monte Carlo sampling.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Poisson};

/// 20-point Gauss-Legendre nodes and weights on [-1, 1], computed by Newton.
fn gl20() -> ([f64; 20], [f64; 20]) {
    let n = 20;
    let mut x = [0.0; 20];
    let mut w = [0.0; 20];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}

/// ln ∫₀¹ p^(s−1) (1−p)^(f−1) dp for s, f ≥ 1, by panelled Gauss-Legendre
/// over the region where the kernel is within e^-45 of its peak.
pub fn ln_kernel_integral(s: f64, f: f64) -> f64 {
    assert!(s >= 1.0 && f >= 1.0);
    let (x, w) = gl20();
    let log_k = |p: f64| {
        let mut v = 0.0;
        if s > 1.0 {
            v += (s - 1.0) * p.ln();
        }
        if f > 1.0 {
            v += (f - 1.0) * (-p).ln_1p();
        }
        v
    };
    let mode = if s + f > 2.0 {
        (s - 1.0) / (s + f - 2.0)
    } else {
        0.5
    };
    let peak = log_k(mode);
    let edge = |inside: f64, outside: f64| {
        if log_k(outside) - peak > -45.0 {
            return outside;
        }
        let (mut a, mut b) = (inside, outside);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if log_k(m) - peak > -45.0 {
                a = m;
            } else {
                b = m;
            }
        }
        b
    };
    let lo = edge(mode, 0.0);
    let hi = edge(mode, 1.0);
    let panels = 400;
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = lo + k as f64 * width;
        let mid = a + width / 2.0;
        for i in 0..20 {
            let p = mid + width / 2.0 * x[i];
            total += w[i] * (log_k(p) - peak).exp();
        }
    }
    peak + (total * width / 2.0).ln()
}

/// Posterior weight on the informative component when a two-component prior
/// w·Beta(a1,b1) + (1−w)·Beta(a0,b0) meets y successes in n, using only
/// quadrature of unnormalized Beta kernels. The binomial coefficient cancels.
pub fn informative_weight_oracle(
    w: f64,
    informative: (f64, f64),
    vague: (f64, f64),
    y: u64,
    n: u64,
) -> f64 {
    let (y, n) = (y as f64, n as f64);
    let ln_m = |(a, b): (f64, f64)| ln_kernel_integral(a + y, b + n - y) - ln_kernel_integral(a, b);
    let li = w.ln() + ln_m(informative);
    let lv = (1.0 - w).ln() + ln_m(vague);
    1.0 / (1.0 + (lv - li).exp())
}

/// A two-component mixture for sampling: ((weight, alpha, beta), ...).
pub type Mixture = Vec<(f64, f64, f64)>;

fn sample_mixture(m: &[(f64, f64, f64)], betas: &[Beta<f64>], rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &(w, _, _)) in m.iter().enumerate() {
        acc += w;
        if u < acc || i + 1 == m.len() {
            return betas[i].sample(rng);
        }
    }
    unreachable!()
}

/// Monte Carlo P(X > Y) with X, Y drawn from independent mixtures. Returns the
/// estimate and its standard error.
pub fn superiority_sampling_oracle(t: &Mixture, c: &Mixture, draws: u64, seed: u64) -> (f64, f64) {
    let bt: Vec<Beta<f64>> = t
        .iter()
        .map(|&(_, a, b)| Beta::new(a, b).unwrap())
        .collect();
    let bc: Vec<Beta<f64>> = c
        .iter()
        .map(|&(_, a, b)| Beta::new(a, b).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..draws {
        let x = sample_mixture(t, &bt, &mut rng);
        let y = sample_mixture(c, &bc, &mut rng);
        if x > y {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

/// Monte Carlo P(N ≥ n) where λ ~ Gamma(2λ₀, rate 2) and N | λ ~ Poisson(λm),
/// for several n sharing the same draws. Returns (estimate, standard error) per n.
pub fn recruitment_sampling_oracle(
    lambda0: f64,
    months: f64,
    ns: &[u64],
    draws: u64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let gamma = Gamma::new(2.0 * lambda0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0u64; ns.len()];
    for _ in 0..draws {
        let lambda: f64 = gamma.sample(&mut rng);
        let count: f64 = Poisson::new(lambda * months).unwrap().sample(&mut rng);
        for (h, &n) in hits.iter_mut().zip(ns) {
            if count >= n as f64 {
                *h += 1;
            }
        }
    }
    hits.iter()
        .map(|&h| {
            let p = h as f64 / draws as f64;
            (p, (p * (1.0 - p) / draws as f64).sqrt())
        })
        .collect()
}
