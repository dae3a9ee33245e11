//! High-dimensional closed forms for ε-PCA on isotropic Gaussian data.
//!
//! In the Marchenko–Pastur limit the generalization error at rank ratio
//! `r = N_K / N_V` (cutoff `λ_cut`, with `r = ∫_{λ_cut} p`) splits as
//!
//! ```text
//! 2·ME/N_V        = (1 − r)(f(ε) − 1)
//! 2·DataBias/N_V  = I₋₁(λ_cut) + I_log(λ_cut) − r
//! ```
//!
//! with `f(x) = 1/x + ln x`. The variance term vanishes in this limit.
//! Its derivative in `r` is `f(λ_cut) − f(ε)`, so the interior optimum is
//! `λ_cut = ε`; the global optimum is one of three regimes (retain-all,
//! interior, collapse) separated by `λ₋(α)` and the collapse threshold `ε*(α)`.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kl::cost_f;
use crate::mp::{MPSpectrum, SpectralIntegrals};
use crate::roots::bisect;
use crate::sum::NeumaierSum;

/// Argument tolerance of every bisection in this module.
pub const ROOT_TOL: f64 = 1e-12;

/// Number of angle-grid panels used by the brute-force minimization.
pub const BRUTE_FORCE_GRID: usize = 1024;

/// Offset from the ends of `(λ₋, 1)` when bracketing `ε*`.
const BRACKET_OFFSET: f64 = 1e-9;

/// Problem size and noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EPCAConfig {
    n_v: usize,
    d_samples: usize,
    eps: f64,
}

impl EPCAConfig {
    pub fn new(n_v: usize, d_samples: usize, eps: f64) -> Result<Self> {
        if n_v == 0 {
            return Err(Error::Argument("visible dimension must be at least 1".into()));
        }
        if d_samples <= n_v {
            return Err(Error::Argument(format!(
                "sample count {d_samples} must exceed the dimension {n_v}"
            )));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Argument(format!("noise floor must be finite and > 0, got {eps}")));
        }
        Ok(Self { n_v, d_samples, eps })
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn d_samples(&self) -> usize {
        self.d_samples
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn alpha(&self) -> f64 {
        self.n_v as f64 / self.d_samples as f64
    }

    pub fn spectrum(&self) -> MPSpectrum {
        MPSpectrum::new(self.alpha()).expect("d_samples > n_v keeps alpha in (0, 1)")
    }
}

/// `ME(r) = (N_V/2)(1 − r)(f(ε) − 1)`.
pub fn model_error(r: f64, eps: f64, n_v: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Argument(format!("rank ratio must lie in [0, 1], got {r}")));
    }
    Ok(0.5 * n_v as f64 * (1.0 - r) * (cost_f(eps)? - 1.0))
}

/// `DataBias(λ_cut) = (N_V/2)[I₋₁ + I_log − r]`.
pub fn data_bias_asymptotic(lambda_cut: f64, spec: &MPSpectrum, n_v: usize) -> f64 {
    let i = spec.integrals(lambda_cut);
    data_bias_from(&i, i.tail_mass, n_v)
}

fn data_bias_from(i: &SpectralIntegrals, r: f64, n_v: usize) -> f64 {
    0.5 * n_v as f64 * (i.inv + i.log - r)
}

/// Asymptotic decomposition at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticPoint {
    pub lambda_cut: f64,
    pub r: f64,
    pub model_error: f64,
    pub data_bias: f64,
    pub ge: f64,
}

fn point_from(i: &SpectralIntegrals, lambda_cut: f64, r: f64, eps: f64, n_v: usize) -> Result<AsymptoticPoint> {
    let me = model_error(r, eps, n_v)?;
    let bias = data_bias_from(i, r, n_v);
    Ok(AsymptoticPoint { lambda_cut, r, model_error: me, data_bias: bias, ge: me + bias })
}

/// `GE(λ_cut) = ME(r(λ_cut)) + DataBias(λ_cut)` with its components.
pub fn asymptotic_point(lambda_cut: f64, spec: &MPSpectrum, eps: f64, n_v: usize) -> Result<AsymptoticPoint> {
    let i = spec.integrals(lambda_cut);
    point_from(&i, lambda_cut, i.tail_mass, eps, n_v)
}

/// Asymptotic generalization error at cutoff `λ_cut`.
pub fn ge_asymptotic(lambda_cut: f64, cfg: &EPCAConfig) -> Result<f64> {
    Ok(asymptotic_point(lambda_cut, &cfg.spectrum(), cfg.eps, cfg.n_v)?.ge)
}

/// Asymptotic decomposition at integer rank `n_k`, with `λ_cut = quantile(n_k/N_V)`.
///
/// `r = n_k/N_V` is used exactly; `n_k = 0` and `n_k = N_V` fall on the
/// support edges.
pub fn ge_at_rank(n_k: usize, cfg: &EPCAConfig) -> Result<AsymptoticPoint> {
    if n_k > cfg.n_v {
        return Err(Error::Argument(format!("rank {n_k} exceeds dimension {}", cfg.n_v)));
    }
    let spec = cfg.spectrum();
    let r = n_k as f64 / cfg.n_v as f64;
    let lambda_cut = spec.quantile(r)?;
    let i = spec.integrals(lambda_cut);
    point_from(&i, lambda_cut, r, cfg.eps, cfg.n_v)
}

/// `d(2·GE/N_V)/dr = f(λ_cut) − f(ε)`.
pub fn dge_dr(lambda_cut: f64, eps: f64) -> Result<f64> {
    Ok(cost_f(lambda_cut)? - cost_f(eps)?)
}

/// The root `λ̃ > 1` of `f(λ) = f(ε)` for `ε ∈ (0, 1)`.
///
/// Returns `+∞` when `λ̃` exceeds the largest finite `f64` (`ε ≲ 1.4e-3`).
pub fn second_root(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Argument(format!("second root needs eps in (0, 1), got {eps}")));
    }
    let target = cost_f(eps)?;
    if target <= 1.0 {
        return Ok(1.0);
    }
    // f is increasing on (1, ∞); work in u = ln λ so the tolerance is relative.
    let g = |u: f64| (-u).exp() + u - target;
    let mut hi_u = 1.0;
    while g(hi_u) < 0.0 {
        hi_u *= 2.0;
    }
    let u = bisect(g, 0.5 * hi_u * f64::from(hi_u > 1.0), hi_u, 1e-16 * hi_u)?;
    Ok(u.exp())
}

/// `(2/N_V)·[GE_interior(ε) − GE(r=0)] = I₋₁(ε) + I_log(ε) − r_ε·f(ε)`.
///
/// Strictly increasing in `ε` on `(λ₋, 1)`; its root is `ε*(α)`.
pub fn interior_minus_collapse(eps: f64, spec: &MPSpectrum) -> Result<f64> {
    let f_eps = cost_f(eps)?;
    let i = spec.integrals(eps);
    Ok(i.inv + i.log - i.tail_mass * f_eps)
}

/// Collapse threshold `ε*(α) ∈ (λ₋, 1)`: above it the optimal rank is zero.
pub fn collapse_threshold(spec: &MPSpectrum) -> Result<f64> {
    let lo = spec.lambda_minus() + BRACKET_OFFSET;
    let hi = 1.0 - BRACKET_OFFSET;
    bisect(|e| interior_minus_collapse(e, spec).unwrap_or(f64::NAN), lo, hi, ROOT_TOL)
}

/// Regime of the globally optimal rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    RetainAll,
    Interior,
    Collapse,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::RetainAll => "retain-all",
            Regime::Interior => "interior",
            Regime::Collapse => "collapse",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified point of the `(α, ε)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub alpha: f64,
    pub eps: f64,
    pub regime: Regime,
    pub r_star: f64,
    pub lambda_cut_star: f64,
    /// `ε ≥ 1`: the regime comes from brute-force minimization, not the closed-form classification.
    pub outside_hypothesis: bool,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("noise floor must be finite and > 0, got {eps}")));
    }
    Ok(())
}

fn analytic_regime(eps: f64, lambda_minus: f64, eps_star: f64) -> Regime {
    if eps <= lambda_minus {
        Regime::RetainAll
    } else if eps >= eps_star {
        Regime::Collapse
    } else {
        Regime::Interior
    }
}

/// Classification with a precomputed `ε*(α)`.
pub fn classify_phase_with_threshold(eps: f64, spec: &MPSpectrum, eps_star: f64) -> Result<PhasePoint> {
    check_eps(eps)?;
    if eps >= 1.0 {
        let mut p = brute_force_phase(eps, spec, BRUTE_FORCE_GRID)?;
        p.outside_hypothesis = true;
        return Ok(p);
    }
    let regime = analytic_regime(eps, spec.lambda_minus(), eps_star);
    let (r_star, lambda_cut_star) = match regime {
        Regime::RetainAll => (1.0, spec.lambda_minus()),
        Regime::Collapse => (0.0, spec.lambda_plus()),
        Regime::Interior => (spec.tail_mass(eps), eps),
    };
    Ok(PhasePoint { alpha: spec.alpha(), eps, regime, r_star, lambda_cut_star, outside_hypothesis: false })
}

/// Analytic three-regime classification.
///
/// `ε ≤ λ₋` is retain-all and `ε ≥ ε*` is collapse, boundaries inclusive.
/// For `ε ≥ 1` the regime is taken from [`brute_force_phase`] and flagged.
pub fn classify_phase(eps: f64, spec: &MPSpectrum) -> Result<PhasePoint> {
    check_eps(eps)?;
    if eps >= 1.0 {
        return classify_phase_with_threshold(eps, spec, f64::NAN);
    }
    if eps <= spec.lambda_minus() {
        return classify_phase_with_threshold(eps, spec, f64::INFINITY);
    }
    classify_phase_with_threshold(eps, spec, collapse_threshold(spec)?)
}

/// Regime from direct minimization of `2·GE/N_V` over the cutoff grid
/// [`MPSpectrum::angle_grid`] of `n_grid` panels, both edges included.
///
/// Exact ties go to the smaller rank.
pub fn brute_force_phase(eps: f64, spec: &MPSpectrum, n_grid: usize) -> Result<PhasePoint> {
    check_eps(eps)?;
    if n_grid < 2 {
        return Err(Error::Argument("brute-force grid needs at least 2 panels".into()));
    }
    let f_eps = cost_f(eps)?;
    let grid = spec.angle_grid(n_grid);
    let panels: Vec<[f64; 3]> = grid
        .windows(2)
        .map(|w| spec.integrate_between(w[0], w[1], |l| [1.0, l.recip(), l.ln()]))
        .collect();

    // Walk from λ₊ (r = 0) downwards, accumulating tail integrals.
    let mut acc = [NeumaierSum::new(), NeumaierSum::new(), NeumaierSum::new()];
    let mut best = (f_eps - 1.0, n_grid, 0.0);
    for j in (0..n_grid).rev() {
        for k in 0..3 {
            acc[k].add(panels[j][k]);
        }
        let r = acc[0].value().clamp(0.0, 1.0);
        let ge = (1.0 - r) * (f_eps - 1.0) + acc[1].value() + acc[2].value() - r;
        if ge < best.0 {
            best = (ge, j, r);
        }
    }
    let (_, j, r) = best;
    let (regime, r_star) = if j == n_grid {
        (Regime::Collapse, 0.0)
    } else if j == 0 {
        (Regime::RetainAll, 1.0)
    } else {
        (Regime::Interior, r)
    };
    Ok(PhasePoint {
        alpha: spec.alpha(),
        eps,
        regime,
        r_star,
        lambda_cut_star: grid[j],
        outside_hypothesis: eps >= 1.0,
    })
}

/// Globally optimal rank in the high-dimensional limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalRank {
    pub regime: Regime,
    pub n_k_star: usize,
    pub r_star: f64,
    pub lambda_cut_star: f64,
    pub outside_hypothesis: bool,
}

/// `N*_K = round(N_V·r*)` (ties to even) with `r* = ∫_ε p` in the interior regime.
pub fn optimal_rank(cfg: &EPCAConfig) -> Result<OptimalRank> {
    let p = classify_phase(cfg.eps, &cfg.spectrum())?;
    let n_k_star = match p.regime {
        Regime::RetainAll => cfg.n_v,
        Regime::Collapse => 0,
        Regime::Interior => (cfg.n_v as f64 * p.r_star).round_ties_even() as usize,
    };
    Ok(OptimalRank {
        regime: p.regime,
        n_k_star,
        r_star: p.r_star,
        lambda_cut_star: p.lambda_cut_star,
        outside_hypothesis: p.outside_hypothesis,
    })
}

/// One cell of a phase grid, classified both ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseGridCell {
    pub alpha_index: usize,
    pub eps_index: usize,
    pub lambda_minus: f64,
    pub eps_star: f64,
    pub analytic: PhasePoint,
    pub brute_force: PhasePoint,
    /// A one-step move in `α` or `ε` changes the analytic regime.
    pub boundary_adjacent: bool,
}

impl PhaseGridCell {
    pub fn agrees(&self) -> bool {
        self.analytic.regime == self.brute_force.regime
    }
}

/// `steps` evenly spaced values on `[min, max]`; a single step yields `min`.
pub fn linspace(min: f64, max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..steps).map(|i| min + (max - min) * i as f64 / (steps - 1) as f64).collect(),
    }
}

fn neighbours(values: &[f64], i: usize) -> [Option<f64>; 2] {
    if values.len() < 2 {
        return [None, None];
    }
    let step = |a: usize, b: usize| values[b] - values[a];
    let below = if i > 0 { values[i - 1] } else { values[0] - step(0, 1) };
    let n = values.len();
    let above = if i + 1 < n { values[i + 1] } else { values[n - 1] + step(n - 2, n - 1) };
    [Some(below), Some(above)]
}

/// Classifies every `(α, ε)` pair analytically and by brute force.
///
/// Output is ordered by `(α index, ε index)`; cells are evaluated in parallel.
pub fn phase_grid(alpha_values: &[f64], eps_values: &[f64]) -> Result<Vec<PhaseGridCell>> {
    for &e in eps_values {
        check_eps(e)?;
    }
    let spectra = alpha_values.iter().map(|&a| MPSpectrum::new(a)).collect::<Result<Vec<_>>>()?;
    let thresholds: Vec<f64> = spectra.par_iter().map(collapse_threshold).collect::<Result<_>>()?;

    // Analytic regime of the virtual neighbours one step outside in α.
    let boundary_of = |alpha: f64| -> Option<(f64, f64)> {
        let spec = MPSpectrum::new(alpha).ok()?;
        Some((spec.lambda_minus(), collapse_threshold(&spec).ok()?))
    };
    let alpha_neighbours: Vec<[Option<(f64, f64)>; 2]> = (0..alpha_values.len())
        .map(|i| neighbours(alpha_values, i).map(|a| a.and_then(boundary_of)))
        .collect();

    let cells: Vec<(usize, usize)> =
        (0..alpha_values.len()).flat_map(|i| (0..eps_values.len()).map(move |j| (i, j))).collect();

    cells
        .par_iter()
        .map(|&(i, j)| {
            let spec = &spectra[i];
            let eps = eps_values[j];
            let eps_star = thresholds[i];
            let analytic = classify_phase_with_threshold(eps, spec, eps_star)?;
            let brute_force = brute_force_phase(eps, spec, BRUTE_FORCE_GRID)?;
            let here = analytic_regime(eps, spec.lambda_minus(), eps_star);
            let eps_moves = neighbours(eps_values, j)
                .into_iter()
                .flatten()
                .map(|e| analytic_regime(e, spec.lambda_minus(), eps_star));
            let alpha_moves = alpha_neighbours[i]
                .into_iter()
                .flatten()
                .map(|(lm, es)| analytic_regime(eps, lm, es));
            let boundary_adjacent = eps_moves.chain(alpha_moves).any(|g| g != here);
            Ok(PhaseGridCell {
                alpha_index: i,
                eps_index: j,
                lambda_minus: spec.lambda_minus(),
                eps_star,
                analytic,
                brute_force,
                boundary_adjacent,
            })
        })
        .collect()
}
