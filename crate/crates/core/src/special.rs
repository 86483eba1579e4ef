//! Dawson's integral and Gauss-Legendre quadrature.

use std::f64::consts::PI;

/// Dawson's integral `F(x) = e^{-x^2} int_0^x e^{y^2} dy`.
///
/// For `|x| < 4` the integral is summed as `sum x^{2n+1} / (n! (2n+1))`, whose
/// terms are all positive. Beyond that the Laplace continued fraction
/// `x / (1 + 2x^2 - 4x^2 / (3 + 2x^2 - 8x^2 / (5 + 2x^2 - ...)))` is evaluated
/// bottom-up.
pub fn dawson(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let v = if ax < 4.0 { dawson_series(ax) } else { dawson_fraction(ax) };
    v.copysign(x)
}

fn dawson_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..400 {
        term *= x2 / n as f64;
        let t = term / (2 * n + 1) as f64;
        sum += t;
        if t <= 1e-17 * sum {
            break;
        }
    }
    (-x2).exp() * sum
}

fn dawson_fraction(x: f64) -> f64 {
    if x > 1e8 {
        return 0.5 / x;
    }
    let x2 = x * x;
    let mut v = 0.0;
    for k in (1..=60).rev() {
        let k = k as f64;
        v = 4.0 * k * x2 / ((2.0 * k + 1.0) + 2.0 * x2 - v);
    }
    x / (1.0 + 2.0 * x2 - v)
}

/// `F'(x) = 1 - 2 x F(x)`.
pub fn dawson_prime(x: f64) -> f64 {
    1.0 - 2.0 * x * dawson(x)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule: `panels` equal panels on `[a, b]`, 10 points each.
#[derive(Debug, Clone)]
pub struct Composite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Composite {
    pub fn new(a: f64, b: f64, panels: usize) -> Self {
        let (x, w) = gauss_legendre(10);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * 10);
        let mut weights = Vec::with_capacity(panels * 10);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + 0.5 * h * xi);
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate<T, F>(&self, mut f: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
        F: FnMut(f64) -> T,
    {
        self.nodes.iter().zip(&self.weights).fold(T::default(), |acc, (&x, &w)| acc + f(x) * w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoid on the defining integral with one Richardson step.
    fn dawson_oracle(x: f64) -> f64 {
        let trap = |n: usize| {
            let h = x / n as f64;
            let mut s = 0.5 * (1.0 + (x * x).exp());
            for k in 1..n {
                let y = k as f64 * h;
                s += (y * y).exp();
            }
            s * h
        };
        (-x * x).exp() * (4.0 * trap(100_000) - trap(50_000)) / 3.0
    }

    #[test]
    fn dawson_matches_defining_integral() {
        for &x in &[0.01, 0.3, 0.92413887, 1.5, 2.7, 3.99, 4.01, 5.5] {
            let want = dawson_oracle(x);
            assert!((dawson(x) - want).abs() < 1e-10, "x={x}: {} vs {want}", dawson(x));
        }
    }

    #[test]
    fn dawson_known_values() {
        // maximum at x = 0.9241388730, F = 0.5410442246
        assert!((dawson(0.924_138_873_0) - 0.541_044_224_6).abs() < 1e-10);
        assert!(dawson_prime(0.924_138_873_0).abs() < 1e-9);
        assert!((dawson(-1.0) + 0.538_079_506_912_768_4).abs() < 1e-14);
    }

    #[test]
    fn dawson_asymptotics() {
        for &x in &[10.0f64, 20.0, 30.0, 1e3] {
            let asym = 1.0 / (2.0 * x) * (1.0 + 1.0 / (2.0 * x * x) + 3.0 / (4.0 * x.powi(4)));
            assert!((dawson(x) - asym).abs() < 1.0 / x.powi(7) + 1e-15, "x={x}");
        }
    }

    #[test]
    fn dawson_is_continuous_at_split() {
        let a = dawson(4.0 - 1e-12);
        let b = dawson(4.0);
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let p18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((p18 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn composite_integrates_gaussian() {
        let q = Composite::new(-10.0, 10.0, 40);
        let v: f64 = q.integrate(|x| (-x * x).exp());
        assert!((v - PI.sqrt()).abs() < 1e-13);
    }
}
