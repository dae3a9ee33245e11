//! Gauss–Legendre quadrature with adaptive interval bisection.
//!
//! The integrand is vector valued so that several spectral integrals over the
//! same interval share abscissae and one refinement pattern.

use std::sync::OnceLock;

/// Order of the base rule.
pub const BASE_ORDER: usize = 20;

const MAX_DEPTH: u32 = 40;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on `P_n` from Chebyshev initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the rule on `[a, b]`.
    pub fn integrate<const K: usize, F>(&self, f: &F, a: f64, b: f64) -> [f64; K]
    where
        F: Fn(f64) -> [f64; K],
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = [0.0; K];
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        acc.map(|s| s * half)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

fn base_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(BASE_ORDER))
}

/// Integrates every component of `f` over `[a, b]`.
///
/// Each interval estimate is compared with the sum over its two halves; an
/// interval is accepted once every component agrees to `rel_tol` relative to
/// the running magnitude of the whole integral (with an absolute floor of
/// `1e-300`). Refinement is deterministic.
pub fn adaptive_integrate<const K: usize, F>(f: F, a: f64, b: f64, rel_tol: f64) -> [f64; K]
where
    F: Fn(f64) -> [f64; K],
{
    if a == b {
        return [0.0; K];
    }
    let rule = base_rule();
    let whole = rule.integrate(&f, a, b);
    let scale = whole.map(|v| v.abs());
    refine(rule, &f, a, b, whole, &scale, rel_tol, 0)
}

#[allow(clippy::too_many_arguments)]
fn refine<const K: usize, F>(
    rule: &GaussLegendre,
    f: &F,
    a: f64,
    b: f64,
    coarse: [f64; K],
    scale: &[f64; K],
    rel_tol: f64,
    depth: u32,
) -> [f64; K]
where
    F: Fn(f64) -> [f64; K],
{
    let mid = 0.5 * (a + b);
    let left = rule.integrate(f, a, mid);
    let right = rule.integrate(f, mid, b);
    let mut fine = [0.0; K];
    let mut converged = true;
    for k in 0..K {
        fine[k] = left[k] + right[k];
        let tol = (rel_tol * scale[k].max(fine[k].abs())).max(1e-300);
        if !((fine[k] - coarse[k]).abs() <= tol) {
            converged = false;
        }
    }
    if converged || depth >= MAX_DEPTH || mid <= a || mid >= b {
        return fine;
    }
    let l = refine(rule, f, a, mid, left, scale, rel_tol, depth + 1);
    let r = refine(rule, f, mid, b, right, scale, rel_tol, depth + 1);
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = l[k] + r[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 20, 33] {
            let rule = GaussLegendre::new(n);
            let total: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn two_point_rule() {
        let rule = GaussLegendre::new(2);
        let r = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(rule.nodes()[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.nodes()[1], r, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.weights()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let rule = GaussLegendre::new(5);
        for deg in 0..10 {
            let got = rule.integrate(&|x: f64| [x.powi(deg)], 0.0, 1.0)[0];
            assert_abs_diff_eq!(got, 1.0 / (deg as f64 + 1.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        // ∫_0^1 1/(x² + c²) dx = atan(1/c)/c
        let c = 1e-3;
        let got = adaptive_integrate(|x| [1.0 / (x * x + c * c)], 0.0, 1.0, 1e-13)[0];
        let exact = (1.0 / c).atan() / c;
        assert!((got - exact).abs() / exact < 1e-12, "{got} vs {exact}");
    }

    #[test]
    fn adaptive_vector_components() {
        let got = adaptive_integrate(|x: f64| [x.sin(), x.exp(), 0.0], 0.0, 2.0, 1e-13);
        assert_abs_diff_eq!(got[0], 1.0 - 2f64.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(got[1], 2f64.exp() - 1.0, epsilon = 1e-13);
        assert_eq!(got[2], 0.0);
        assert_eq!(adaptive_integrate(|_| [1.0], 3.0, 3.0, 1e-12), [0.0]);
    }
}
