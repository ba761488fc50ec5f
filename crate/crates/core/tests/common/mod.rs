//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use levy_libor::drift::Real;

/// Exponentially scaled Bessel function `e^z K_1(z)`, from
/// `∫_0^∞ e^{−z (cosh t − 1)} cosh t dt` by the trapezoid rule, which
/// converges geometrically for this analytic integrand.
pub fn bessel_k1_scaled(z: f64) -> f64 {
    assert!(z > 0.0);
    let h = 0.05;
    let f = |t: f64| (-z * (t.cosh() - 1.0)).exp() * t.cosh();
    let mut sum = 0.5 * f(0.0);
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        let c = t.cosh();
        if z * (c - 1.0) > 746.0 + c.ln() {
            break;
        }
        sum += f(t);
        k += 1;
    }
    h * sum
}

pub fn bessel_k1(z: f64) -> f64 {
    bessel_k1_scaled(z) * (-z).exp()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `∫_a^b f` split into the given panel edges.
pub fn integrate_panels(f: &dyn Fn(f64) -> f64, edges: &[f64], rule: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
        total += r * rule.iter().map(|(x, wt)| wt * f(m + r * x)).sum::<f64>();
    }
    total
}

/// Symmetric NIG Lévy density `(δ̄α/π) K_1(α|x|)/|x|` times `e^{α|x|}`.
pub fn nig_levy_density_scaled(x: f64, alpha: f64, delta_bar: f64) -> f64 {
    let ax = x.abs();
    delta_bar * alpha / std::f64::consts::PI * bessel_k1_scaled(alpha * ax) / ax
}

/// `∫ g(x) ν(dx)` where `g_damped(x) = g(x) e^{−α|x|}`, for an integrand
/// with `g(x) = O(x²)` at the origin and at most `e^{growth·|x|}` in the
/// tails. Panels are graded geometrically into the origin (split at
/// `|x| = 1`) and run in unit widths to where the tail is negligible.
pub fn levy_integral(g_damped: &dyn Fn(f64) -> f64, alpha: f64, delta_bar: f64, growth_pos: f64, growth_neg: f64) -> f64 {
    let rule = gauss_legendre(20);
    let side = |sign: f64, growth: f64| {
        assert!(growth < alpha, "integrand not integrable");
        let mut edges: Vec<f64> = (0..=55).rev().map(|k| 0.5f64.powi(k)).collect();
        let reach = 50.0 / (alpha - growth) + 5.0;
        let mut x = 1.0;
        while x < reach {
            x += 1.0;
            edges.push(x);
        }
        let f = |x: f64| g_damped(sign * x) * nig_levy_density_scaled(x, alpha, delta_bar);
        integrate_panels(&f, &edges, &rule)
    };
    side(1.0, growth_pos) + side(-1.0, growth_neg)
}

/// `e^y − 1 − y` without cancellation.
pub fn expm1_minus_linear(y: f64) -> f64 {
    if y.abs() < 1e-2 {
        let y2 = y * y;
        y2 * (0.5 + y * (1.0 / 6.0 + y * (1.0 / 24.0 + y * (1.0 / 120.0 + y / 720.0))))
    } else {
        y.exp_m1() - y
    }
}

/// `(e^{ux} − 1 − ux) e^{−α|x|}`.
pub fn cumulant_integrand_damped(u: f64, alpha: f64, x: f64) -> f64 {
    let d = -alpha * x.abs();
    if x.abs() < 1.0 {
        expm1_minus_linear(u * x) * d.exp()
    } else {
        (u * x + d).exp() - (1.0 + u * x) * d.exp()
    }
}

/// Jump drift of the rate with loading `a` against later rates with
/// loadings `lambdas` and compounding weights `weights`, as a Lévy-measure
/// integral: `∫ [(e^{ax} − 1) ∏ (1 + w_l(e^{λ_l x} − 1)) − a x] ν(dx)`.
pub fn jump_integral_by_quadrature(a: f64, lambdas: &[f64], weights: &[f64], alpha: f64, delta_bar: f64) -> f64 {
    let g = |x: f64| {
        let log_p: f64 = lambdas
            .iter()
            .zip(weights)
            .map(|(l, w)| (w * (l * x).exp_m1()).ln_1p())
            .sum();
        let d = -alpha * x.abs();
        if x.abs() < 1.0 {
            (expm1_minus_linear(a * x) + (a * x).exp_m1() * log_p.exp_m1()) * d.exp()
        } else {
            (a * x + log_p + d).exp() - (log_p + d).exp() - a * x * d.exp()
        }
    };
    let pos = a.max(0.0) + lambdas.iter().filter(|l| **l > 0.0).sum::<f64>();
    let neg = (-a).max(0.0) - lambdas.iter().filter(|l| **l < 0.0).sum::<f64>();
    levy_integral(&g, alpha, delta_bar, pos, neg)
}

/// Double-double scalar (about 32 significant digits).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd(x, 0.0)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.0, o.0);
        let (t, f) = two_sum(self.1, o.1);
        let d = quick_two_sum(s, e + t);
        quick_two_sum(d.0, d.1 + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        quick_two_sum(p, e + (self.0 * o.1 + self.1 * o.0))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self - o * Dd::from(q1);
        let q2 = r.0 / o.0;
        let r = r - o * Dd::from(q2);
        let q3 = r.0 / o.0;
        let q = quick_two_sum(q1, q2);
        q + Dd::from(q3)
    }
}

impl Real for Dd {}

impl Dd {
    pub fn to_f64(self) -> f64 {
        self.0 + self.1
    }
}
