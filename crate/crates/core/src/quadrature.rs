//! Gauss–Legendre and Gauss–Hermite rules, and log-space summation.

use std::f64::consts::PI;

/// Node–weight pairs of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `n`-point Gauss–Legendre rule on `[lo, hi]`.
///
/// Roots of `P_n` by Newton iteration from the Tricomi initial guess.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Rule {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mid = 0.5 * (hi + lo);
    let half = 0.5 * (hi - lo);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let dp = legendre_with_derivative(n, z).1;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = mid - half * z;
        nodes[n - 1 - i] = mid + half * z;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Hermite rule for the weight `exp(-x^2)`.
///
/// Uses orthonormal Hermite polynomials so weights stay accurate in the
/// far tails.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "Gauss-Hermite needs at least one node");
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-14 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // ascending order, like the Legendre rule
    nodes.reverse();
    weights.reverse();
    Rule { nodes, weights }
}

/// `ln(sum exp(x_i))` with max-shift stabilization. Returns `-inf` when
/// every term is `-inf` and `NaN` if any term is `NaN`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if values.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    if max.is_infinite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(5, -1.0, 2.0);
        // degree 9 = 2n - 1
        let exact = (2.0f64.powi(10) - 1.0) / 10.0;
        assert!((rule.integrate(|x| x.powi(9)) - exact).abs() < 1e-11);
        assert!((rule.weights.iter().sum::<f64>() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_nodes_are_sorted_and_interior() {
        let rule = gauss_legendre(64, 0.0, 1.0);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(rule.nodes[0] > 0.0 && rule.nodes[63] < 1.0);
    }

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite(20);
        let sqrt_pi = PI.sqrt();
        assert!((rule.integrate(|_| 1.0) - sqrt_pi).abs() < 1e-13);
        // int x^2 e^{-x^2} = sqrt(pi)/2, int x^8 e^{-x^2} = 105 sqrt(pi)/16
        assert!((rule.integrate(|x| x * x) - sqrt_pi / 2.0).abs() < 1e-13);
        assert!((rule.integrate(|x| x.powi(8)) - 105.0 * sqrt_pi / 16.0).abs() < 1e-11);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hermite_tail_weights_stay_positive() {
        let rule = gauss_hermite(80);
        assert!(rule.weights.iter().all(|w| *w > 0.0));
        assert!((rule.integrate(|_| 1.0) - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(log_sum_exp(&[0.0, f64::NAN]).is_nan());
    }
}
