//! Invariant checklist behind `epca verify`.

use std::fmt;

use epca_core::kl::kl_diag;
use epca_core::mc::{build_diamond_model, decompose_models, m_projection, sample_realizations};
use epca_core::mp::MPSpectrum;
use epca_core::theory::{dge_dr, ge_asymptotic, ge_at_rank, second_root, EPCAConfig};
use epca_core::{DiagGaussian, GeCurve, Regime};

use crate::args::RunConfig;
use crate::commands::compute_curve;
use crate::CliError;

/// Result of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn bounded(name: &'static str, value: f64, tol: f64, what: &str) -> CheckOutcome {
    CheckOutcome { name, passed: value <= tol, detail: format!("{what} = {value:.3e} (tolerance {tol:.1e})") }
}

struct IdentityGaps {
    gpt: f64,
    f_bar: f64,
    min_f_bar: f64,
    forms: f64,
}

fn identity_gaps(cfg: &RunConfig) -> Result<IdentityGaps, CliError> {
    let samples = sample_realizations(cfg.n_v, cfg.d_samples, cfg.seed, cfg.realizations)?;
    let p = DiagGaussian::isotropic(cfg.n_v, 1.0)?;
    let mut g = IdentityGaps { gpt: 0.0, f_bar: 0.0, min_f_bar: f64::INFINITY, forms: 0.0 };
    for k in 0..=cfg.n_v {
        let models: Vec<_> =
            samples.iter().map(|s| build_diamond_model(s, k, cfg.eps)).collect::<Result<_, _>>()?;
        let q0 = m_projection(cfg.n_v, k, cfg.eps)?;
        let d = decompose_models(&models, &q0)?;
        g.f_bar = g.f_bar.max((d.variance - d.f_bar).abs());
        g.min_f_bar = g.min_f_bar.min(d.f_bar);
        g.forms = g.forms.max(d.pythagorean_gap().abs());
        for q in &models {
            let lhs = kl_diag(&p, q)?;
            let rhs = kl_diag(&p, &q0)? + kl_diag(&q0, q)?;
            g.gpt = g.gpt.max((lhs - rhs).abs());
        }
    }
    Ok(g)
}

fn mp_round_trip(spec: &MPSpectrum) -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        worst = worst.max((spec.tail_mass(spec.quantile(r)?) - r).abs());
    }
    Ok(worst)
}

fn sign_pattern(cfg: &RunConfig, spec: &MPSpectrum) -> Result<CheckOutcome, CliError> {
    let name = "dge-dr-sign-pattern";
    let eps = cfg.eps;
    let zero = dge_dr(eps, eps)?;
    if eps >= 1.0 {
        let detail = format!("dge_dr(eps, eps) = {zero:e}; no sign change for eps >= 1");
        return Ok(CheckOutcome { name, passed: zero == 0.0, detail });
    }
    // Signs read along increasing r, i.e. decreasing cutoff.
    let h = 1e-4 * eps;
    let at_eps = dge_dr(eps + h, eps)? < 0.0 && dge_dr(eps - h, eps)? > 0.0;
    let lt = second_root(eps)?;
    let (at_lt, where_lt) = if lt < spec.lambda_plus() && lt > spec.lambda_minus() {
        let h = 1e-4 * lt;
        (dge_dr(lt + h, eps)? > 0.0 && dge_dr(lt - h, eps)? < 0.0, "inside")
    } else {
        (true, "outside")
    };
    Ok(CheckOutcome {
        name,
        passed: zero == 0.0 && at_eps && at_lt,
        detail: format!(
            "dge_dr(eps, eps) = {zero:e}, -/+ at eps = {at_eps}, second root {lt:.7} {where_lt} the support, +/- = {at_lt}"
        ),
    })
}

fn second_difference(cfg: &RunConfig, theory: &EPCAConfig) -> Result<CheckOutcome, CliError> {
    let name = "second-difference-positive";
    let spec = theory.spectrum();
    let dr = 1e-3;
    let r_star = spec.tail_mass(cfg.eps);
    let interior = cfg.eps > spec.lambda_minus() && cfg.eps < 1.0 && r_star > dr && r_star < 1.0 - dr;
    if !interior {
        return Ok(CheckOutcome { name, passed: true, detail: "skipped: eps is not an interior cutoff".into() });
    }
    let ge = |r: f64| -> Result<f64, CliError> { Ok(ge_asymptotic(spec.quantile(r)?, theory)?) };
    let second = ge(r_star + dr)? - 2.0 * ge(r_star)? + ge(r_star - dr)?;
    Ok(CheckOutcome { name, passed: second > 0.0, detail: format!("GE(r*+h) - 2GE(r*) + GE(r*-h) = {second:.3e}") })
}

/// In the retain-all regime each added rank lowers GE while its cutoff stays
/// below the second root, so GE over ranks is non-increasing down to `N_V`.
fn retain_all_monotone(cfg: &RunConfig) -> Result<CheckOutcome, CliError> {
    let name = "retain-all-monotonicity";
    let spec = MPSpectrum::new(cfg.alpha())?;
    let eps = 0.5 * spec.lambda_minus();
    let theory = EPCAConfig::new(cfg.n_v, cfg.d_samples, eps)?;
    let lt = second_root(eps)?;
    let ge: Vec<_> = (0..=cfg.n_v).map(|k| ge_at_rank(k, &theory)).collect::<Result<_, _>>()?;
    let mut violations = 0;
    for w in ge.windows(2) {
        if w[0].lambda_cut <= lt && w[1].ge > w[0].ge {
            violations += 1;
        }
    }
    let regime = epca_core::optimal_rank(&theory)?.regime;
    let min_at_top = ge.iter().all(|p| p.ge >= ge[cfg.n_v].ge);
    Ok(CheckOutcome {
        name,
        passed: violations == 0 && min_at_top && regime == Regime::RetainAll,
        detail: format!("eps = {eps:.5}: regime {regime}, {violations} increasing steps, minimum at N_V = {min_at_top}"),
    })
}

fn optimal_rank_agreement(curve: &GeCurve) -> CheckOutcome {
    let empirical = curve.empirical_argmin();
    let predicted = curve.optimum.n_k_star;
    CheckOutcome {
        name: "optimal-rank-agreement",
        passed: empirical.abs_diff(predicted) <= 1,
        detail: format!("empirical argmin {empirical}, closed form {predicted}"),
    }
}

/// Runs every check; never stops early.
pub fn run_verify(cfg: &RunConfig) -> Result<Vec<CheckOutcome>, CliError> {
    let tol = cfg.tolerance.unwrap_or(1e-10);
    let theory = EPCAConfig::new(cfg.n_v, cfg.d_samples, cfg.eps)?;
    let spec = theory.spectrum();
    let curve = compute_curve(cfg)?;
    let gaps = identity_gaps(cfg)?;

    let mut out = vec![
        bounded("rotational-equivalence", curve.max_rotation_gap().unwrap_or(f64::INFINITY), tol, "max |KL_full - KL_diag|"),
        bounded("additivity-residual", curve.max_abs_residual(), tol, "max |GE - ME - bias - var|"),
        bounded("gpt-identity", gaps.gpt, tol, "max |KL(P|Q) - KL(P|Q0) - KL(Q0|Q)|"),
    ];
    let mut f_bar = bounded("f-bar-identity", gaps.f_bar, tol, "max |var - F_bar|");
    f_bar.passed &= gaps.min_f_bar >= 0.0;
    f_bar.detail.push_str(&format!(", min F_bar = {:.3e}", gaps.min_f_bar));
    out.push(f_bar);
    out.push(bounded("bias-forms", gaps.forms, tol, "max |bias_alg - bias_gpt|"));
    out.push(bounded("mp-round-trip", mp_round_trip(&spec)?, tol, "max |tail_mass(quantile(r)) - r|"));
    out.push(sign_pattern(cfg, &spec)?);
    out.push(second_difference(cfg, &theory)?);
    out.push(retain_all_monotone(cfg)?);
    out.push(optimal_rank_agreement(&curve));
    Ok(out)
}
