//! Gauss-Legendre quadrature on [0,1].

use alloc::vec::Vec;

use crate::math;

/// Nodes and weights of the q-point Gauss-Legendre rule on [0,1].
///
/// Exact for polynomials of degree 2q-1. Nodes are ascending.
pub fn gauss_legendre(q: usize) -> Vec<(f64, f64)> {
    assert!(q >= 1, "quadrature order must be positive");
    let n = q;
    let mut rule = Vec::with_capacity(n);
    // Newton iteration from Chebyshev-like initial guesses on [-1,1];
    // nodes come in symmetric pairs, so only the lower half is computed.
    for i in 0..(n + 1) / 2 {
        let mut x = -math::cos(math::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if math::abs(dx) < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
    }
    let mut full: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &(x, w) in &rule {
        full.push((x, w));
    }
    for i in (0..n / 2).rev() {
        let (x, w) = rule[i];
        full.push((-x, w));
    }
    // Map [-1,1] -> [0,1].
    full.iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Legendre polynomial P_n and its derivative at x via the three-term
/// recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
