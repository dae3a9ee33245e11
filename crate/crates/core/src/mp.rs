//! Marchenko–Pastur spectrum of `(1/D)·XᵀX` for standard normal `X`.
//!
//! Integrals against the density are taken in the angle variable
//! `λ = λ₋ + (λ₊ − λ₋)·sin²θ`, under which
//! `p(λ) dλ = 4 sin²(2θ) / (π λ) dθ`; the square-root edge behaviour is gone
//! and Gauss–Legendre converges quickly.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_integrate;

/// Relative tolerance of the adaptive quadrature.
pub const QUADRATURE_REL_TOL: f64 = 1e-12;

/// Absolute tolerance, in λ, of quantile inversion.
pub const QUANTILE_TOL: f64 = 1e-12;

/// Marchenko–Pastur law for aspect ratio `α = N_V / D ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MPSpectrum {
    alpha: f64,
    lambda_minus: f64,
    lambda_plus: f64,
}

/// Tail integrals above a cutoff `λ_cut`:
/// mass `r = ∫p`, `I₋₁ = ∫p/λ` and `I_log = ∫ln λ·p`, all over `[λ_cut, λ₊]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralIntegrals {
    pub tail_mass: f64,
    pub inv: f64,
    pub log: f64,
}

impl MPSpectrum {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Argument(format!("aspect ratio must lie in (0, 1), got {alpha}")));
        }
        let s = alpha.sqrt();
        Ok(Self { alpha, lambda_minus: (1.0 - s) * (1.0 - s), lambda_plus: (1.0 + s) * (1.0 + s) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }

    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }

    /// `(λ₋, λ₊) = ((1 − √α)², (1 + √α)²)`.
    pub fn edges(&self) -> (f64, f64) {
        (self.lambda_minus, self.lambda_plus)
    }

    fn width(&self) -> f64 {
        self.lambda_plus - self.lambda_minus
    }

    /// `p(λ) = √((λ₊ − λ)(λ − λ₋)) / (2παλ)`, zero outside the support.
    pub fn density(&self, lambda: f64) -> f64 {
        if !(lambda > self.lambda_minus && lambda < self.lambda_plus) {
            return 0.0;
        }
        let radicand = (self.lambda_plus - lambda) * (lambda - self.lambda_minus);
        radicand.max(0.0).sqrt() / (2.0 * PI * self.alpha * lambda)
    }

    /// Point of the support at angle `θ ∈ [0, π/2]`.
    fn lambda_at(&self, theta: f64) -> f64 {
        let s = theta.sin();
        self.lambda_minus + self.width() * s * s
    }

    fn angle_of(&self, lambda_cut: f64) -> f64 {
        let u = ((lambda_cut - self.lambda_minus) / self.width()).clamp(0.0, 1.0);
        u.sqrt().asin()
    }

    /// `∫_{λ_cut}^{λ₊} g(λ)·p(λ) dλ` for each component of `g`.
    ///
    /// Cutoffs below the support integrate over all of it; cutoffs above give zero.
    pub fn integrate_tail<const K: usize, G>(&self, lambda_cut: f64, g: G) -> [f64; K]
    where
        G: Fn(f64) -> [f64; K],
    {
        self.integrate_between(lambda_cut, self.lambda_plus, g)
    }

    /// `∫_{lo}^{hi} g(λ)·p(λ) dλ` with both limits clamped to the support.
    pub fn integrate_between<const K: usize, G>(&self, lo: f64, hi: f64, g: G) -> [f64; K]
    where
        G: Fn(f64) -> [f64; K],
    {
        let (a, b) = (self.angle_of(lo), self.angle_of(hi));
        if !(b > a) {
            return [0.0; K];
        }
        adaptive_integrate(
            |theta| {
                let lambda = self.lambda_at(theta);
                let s = (2.0 * theta).sin();
                let weight = 4.0 * s * s / (PI * lambda);
                g(lambda).map(|v| v * weight)
            },
            a,
            b,
            QUADRATURE_REL_TOL,
        )
    }

    /// Mass `r = ∫_{λ_cut}^{λ₊} p`, clamped to `[0, 1]`.
    pub fn tail_mass(&self, lambda_cut: f64) -> f64 {
        if lambda_cut <= self.lambda_minus {
            return 1.0;
        }
        let [r] = self.integrate_tail(lambda_cut, |_| [1.0]);
        clamp_mass(r)
    }

    /// `I₋₁(λ_cut) = ∫_{λ_cut}^{λ₊} p(λ)/λ dλ`.
    pub fn integral_inv(&self, lambda_cut: f64) -> f64 {
        self.integrals(lambda_cut).inv
    }

    /// `I_log(λ_cut) = ∫_{λ_cut}^{λ₊} ln λ · p(λ) dλ`.
    pub fn integral_log(&self, lambda_cut: f64) -> f64 {
        self.integrals(lambda_cut).log
    }

    /// Tail mass and both spectral integrals in one quadrature pass.
    pub fn integrals(&self, lambda_cut: f64) -> SpectralIntegrals {
        let [r, inv, log] = self.integrate_tail(lambda_cut, |l| [1.0, l.recip(), l.ln()]);
        SpectralIntegrals { tail_mass: clamp_mass(r), inv, log }
    }

    /// Inverse of the upper-tail CDF: the `λ_cut` with `tail_mass(λ_cut) = r`.
    ///
    /// Bisection on `[λ₋, λ₊]`; the tail mass is flat at both edges, which
    /// rules out Newton steps there.
    pub fn quantile(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Argument(format!("tail mass must lie in [0, 1], got {r}")));
        }
        if r == 0.0 {
            return Ok(self.lambda_plus);
        }
        if r == 1.0 {
            return Ok(self.lambda_minus);
        }
        let (mut lo, mut hi) = (self.lambda_minus, self.lambda_plus);
        while hi - lo > QUANTILE_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.tail_mass(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Angle grid `λ_j = λ₋ + (λ₊ − λ₋)·sin²(πj/2n)`, `j = 0..=n`, dense near both edges.
    pub fn angle_grid(&self, n: usize) -> Vec<f64> {
        let mut grid: Vec<f64> = (0..=n).map(|j| self.lambda_at(FRAC_PI_2 * j as f64 / n as f64)).collect();
        grid[0] = self.lambda_minus;
        grid[n] = self.lambda_plus;
        grid
    }
}

fn clamp_mass(r: f64) -> f64 {
    r.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_alpha() {
        for a in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            assert!(MPSpectrum::new(a).is_err());
        }
    }

    #[test]
    fn edge_values() {
        let (lm, lp) = MPSpectrum::new(0.25).unwrap().edges();
        assert_abs_diff_eq!(lm, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(lp, 2.25, epsilon = 1e-15);

        let (lm, lp) = MPSpectrum::new(2.0 / 3.0).unwrap().edges();
        let s = (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(lm, (1.0 - s).powi(2), epsilon = 1e-15);
        assert_abs_diff_eq!(lm, 0.033_673_5, epsilon = 1e-6);
        assert_abs_diff_eq!(lp, 3.299_659_8, epsilon = 1e-6);

        let (lm, lp) = MPSpectrum::new(1e-12).unwrap().edges();
        assert_abs_diff_eq!(lm, 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(lp, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn density_vanishes_at_and_outside_edges() {
        let mp = MPSpectrum::new(0.4).unwrap();
        let (lm, lp) = mp.edges();
        assert_eq!(mp.density(lm), 0.0);
        assert_eq!(mp.density(lp), 0.0);
        assert_eq!(mp.density(lm * 0.5), 0.0);
        assert_eq!(mp.density(lp + 1.0), 0.0);
        assert!(mp.density(1.0) > 0.0);
    }

    /// Midpoint rule in λ with many cells: slow but independent of the angle substitution.
    fn midpoint_tail(mp: &MPSpectrum, cut: f64, g: impl Fn(f64) -> f64) -> f64 {
        let (lm, lp) = mp.edges();
        let a = cut.max(lm);
        let n = 400_000;
        let h = (lp - a) / n as f64;
        (0..n).map(|i| a + (i as f64 + 0.5) * h).map(|l| g(l) * mp.density(l) * h).sum()
    }

    #[test]
    fn density_quadrature_against_midpoint_oracle() {
        let mp = MPSpectrum::new(0.3).unwrap();
        for cut in [0.0, 0.5, 1.0, 1.7] {
            let i = mp.integrals(cut);
            assert_abs_diff_eq!(i.tail_mass, midpoint_tail(&mp, cut, |_| 1.0), epsilon = 2e-7);
            assert_abs_diff_eq!(i.inv, midpoint_tail(&mp, cut, |l| 1.0 / l), epsilon = 2e-7);
            assert_abs_diff_eq!(i.log, midpoint_tail(&mp, cut, f64::ln), epsilon = 2e-7);
        }
    }

    #[test]
    fn total_mass_and_moments() {
        for alpha in [0.01, 0.1, 0.25, 0.5, 2.0 / 3.0, 0.9, 0.99] {
            let mp = MPSpectrum::new(alpha).unwrap();
            let [m0, m1, m2] = mp.integrate_tail(0.0, |l| [1.0, l, l * l]);
            assert_abs_diff_eq!(m0, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(m1, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(m2, 1.0 + alpha, epsilon = 1e-10);
        }
    }

    #[test]
    fn tail_mass_endpoints() {
        let mp = MPSpectrum::new(2.0 / 3.0).unwrap();
        let (lm, lp) = mp.edges();
        assert_eq!(mp.tail_mass(lm), 1.0);
        assert_eq!(mp.tail_mass(lp), 0.0);
        assert_eq!(mp.tail_mass(-1.0), 1.0);
        assert_eq!(mp.tail_mass(10.0), 0.0);
    }

    #[test]
    fn quantile_endpoints_and_errors() {
        let mp = MPSpectrum::new(0.5).unwrap();
        assert_eq!(mp.quantile(0.0).unwrap(), mp.lambda_plus());
        assert_eq!(mp.quantile(1.0).unwrap(), mp.lambda_minus());
        assert!(mp.quantile(-0.01).is_err());
        assert!(mp.quantile(1.01).is_err());
        assert!(mp.quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_round_trips() {
        let mp = MPSpectrum::new(2.0 / 3.0).unwrap();
        let r = mp.tail_mass(0.5);
        assert_abs_diff_eq!(mp.quantile(r).unwrap(), 0.5, epsilon = 1e-9);
        let r1 = mp.tail_mass(1.0);
        assert_abs_diff_eq!(mp.quantile(r1).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn integrals_vanish_at_upper_edge() {
        let mp = MPSpectrum::new(0.5).unwrap();
        let i = mp.integrals(mp.lambda_plus());
        assert_eq!((i.tail_mass, i.inv, i.log), (0.0, 0.0, 0.0));
    }

    #[test]
    fn inverse_moment_over_full_support() {
        // The exact finite-D Wishart identity E[tr S⁻¹]/N_V = D/(D − N_V − 1)
        // tends to 1/(1 − α); the Monte-Carlo check lives in the harness tests.
        for alpha in [0.1, 0.25, 0.5, 2.0 / 3.0, 0.9] {
            let mp = MPSpectrum::new(alpha).unwrap();
            assert_abs_diff_eq!(mp.integral_inv(mp.lambda_minus()), 1.0 / (1.0 - alpha), epsilon = 1e-8);
        }
    }

    #[test]
    fn log_moment_small_alpha() {
        let mp = MPSpectrum::new(0.01).unwrap();
        assert_abs_diff_eq!(mp.integral_log(mp.lambda_minus()), -0.005, epsilon = 2e-4);
    }

    #[test]
    fn inverse_integral_derivative_matches_density() {
        let mp = MPSpectrum::new(0.4).unwrap();
        let (lm, lp) = mp.edges();
        let h = 1e-5;
        for k in 1..=20 {
            let cut = lm + (lp - lm) * k as f64 / 21.0;
            let fd = (mp.integral_inv(cut + h) - mp.integral_inv(cut - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, -mp.density(cut) / cut, epsilon = 1e-6);
            let fd_log = (mp.integral_log(cut + h) - mp.integral_log(cut - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd_log, -mp.density(cut) * cut.ln(), epsilon = 1e-6);
        }
    }

    #[test]
    fn angle_grid_spans_support() {
        let mp = MPSpectrum::new(0.3).unwrap();
        let g = mp.angle_grid(8);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], mp.lambda_minus());
        assert_eq!(g[8], mp.lambda_plus());
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn density_non_negative(alpha in 0.001f64..0.999, lambda in -1.0f64..6.0) {
            let mp = MPSpectrum::new(alpha).unwrap();
            let d = mp.density(lambda);
            prop_assert!(d >= 0.0);
            if lambda <= mp.lambda_minus() || lambda >= mp.lambda_plus() {
                prop_assert_eq!(d, 0.0);
            }
        }

        #[test]
        fn tail_mass_monotone(alpha in 0.01f64..0.99, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let mp = MPSpectrum::new(alpha).unwrap();
            let (lm, lp) = mp.edges();
            let (x, y) = (lm + a.min(b) * (lp - lm), lm + a.max(b) * (lp - lm));
            prop_assert!(mp.tail_mass(x) + 1e-14 >= mp.tail_mass(y));
        }

        #[test]
        fn quantile_inverts_tail_mass(r in 0.0f64..=1.0) {
            let mp = MPSpectrum::new(2.0 / 3.0).unwrap();
            let cut = mp.quantile(r).unwrap();
            prop_assert!((mp.tail_mass(cut) - r).abs() < 1e-9);
        }
    }
}
