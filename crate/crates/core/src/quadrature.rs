//! Gauss-Legendre rules on [-1, 1], computed once per order and shared.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Orders tried in turn by [`integrate_adaptive`].
pub const ORDERS: [usize; 5] = [64, 128, 256, 512, 1024];

pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

static RULES: [OnceLock<Rule>; 5] = [
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
];

pub fn rule(order: usize) -> &'static Rule {
    let slot = ORDERS
        .iter()
        .position(|&o| o == order)
        .expect("unsupported Gauss-Legendre order");
    RULES[slot].get_or_init(|| gauss_legendre(order))
}

/// Newton iteration on P_n from the Tricomi initial guesses.
fn gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// ∫_lo^hi f with a fixed rule of the given order.
pub fn integrate<F: FnMut(f64) -> f64>(order: usize, lo: f64, hi: f64, mut f: F) -> f64 {
    let r = rule(order);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut sum = 0.0;
    for (x, w) in r.nodes.iter().zip(&r.weights) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Raises the order through [`ORDERS`] until two successive estimates agree
/// within `tol`; returns the last estimate either way.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(lo: f64, hi: f64, tol: f64, mut f: F) -> f64 {
    let mut prev = integrate(ORDERS[0], lo, hi, &mut f);
    for &order in &ORDERS[1..] {
        let cur = integrate(order, lo, hi, &mut f);
        if (cur - prev).abs() <= tol {
            return cur;
        }
        prev = cur;
    }
    prev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for &n in &ORDERS {
            let r = rule(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "order {n}: {s}");
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exact_for_polynomials() {
        // degree 2n - 1 is integrated exactly; check x^127 + x^40 on [0, 1] at n = 64.
        let got = integrate(64, 0.0, 1.0, |x| x.powi(127) + x.powi(40));
        assert!((got - (1.0 / 128.0 + 1.0 / 41.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_converges_on_smooth_peak() {
        let got = integrate_adaptive(-10.0, 10.0, 1e-12, |x| (-0.5 * x * x).exp());
        assert!((got - (2.0 * PI).sqrt()).abs() < 1e-11);
    }
}
