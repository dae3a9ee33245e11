use serde::Serialize;

use epca_core::mp::MPSpectrum;
use epca_core::theory::{collapse_threshold, linspace, optimal_rank, phase_grid, second_root, EPCAConfig};
use epca_core::{empirical_ge_curve, CurveConfig, GeCurve, PhaseGridCell, Regime};

use crate::args::{Format, RunConfig};
use crate::output::{emit, finite, json, opt_real, real, sidecar, write_file, Table};
use crate::CliError;

/// Number of α samples in the boundary-curve file.
pub const BOUNDARY_POINTS: usize = 200;

pub const GE_CURVE_COLUMNS: [&str; 10] = [
    "n_k",
    "ge_empirical_eigen",
    "ge_empirical_diamond",
    "me_exact",
    "bias_exact",
    "var_exact",
    "residual",
    "ge_asymptotic",
    "me_asymptotic",
    "bias_asymptotic",
];

#[derive(Debug, Serialize)]
struct CurveSummary<'a> {
    config: &'a RunConfig,
    argmin_n_k: usize,
    n_k_star: usize,
    lambda_cut_star: f64,
    r_star: f64,
    regime: Regime,
    outside_hypothesis: bool,
    max_residual: f64,
    max_rotation_gap: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CurveJsonRow {
    n_k: usize,
    ge_empirical_eigen: Option<f64>,
    ge_empirical_diamond: f64,
    me_exact: f64,
    bias_exact: f64,
    var_exact: f64,
    residual: f64,
    ge_asymptotic: f64,
    me_asymptotic: f64,
    bias_asymptotic: f64,
}

fn curve_summary<'a>(cfg: &'a RunConfig, curve: &GeCurve) -> CurveSummary<'a> {
    CurveSummary {
        config: cfg,
        argmin_n_k: curve.empirical_argmin(),
        n_k_star: curve.optimum.n_k_star,
        lambda_cut_star: curve.optimum.lambda_cut_star,
        r_star: curve.optimum.r_star,
        regime: curve.optimum.regime,
        outside_hypothesis: curve.optimum.outside_hypothesis,
        max_residual: curve.max_abs_residual(),
        max_rotation_gap: curve.max_rotation_gap(),
    }
}

pub(crate) fn compute_curve(cfg: &RunConfig) -> Result<GeCurve, CliError> {
    let curve_cfg = CurveConfig::new(cfg.n_v, cfg.d_samples, cfg.eps, cfg.realizations, cfg.seed);
    Ok(empirical_ge_curve(&curve_cfg)?)
}

fn curve_csv(curve: &GeCurve) -> String {
    let mut t = Table::new(&GE_CURVE_COLUMNS);
    for r in &curve.rows {
        t.row(&[
            r.n_k.to_string(),
            opt_real(r.ge_empirical_eigen),
            real(r.ge_empirical_diamond),
            real(r.exact.model_error),
            real(r.exact.data_bias),
            real(r.exact.variance),
            real(r.exact.residual),
            real(r.ge_asymptotic),
            real(r.me_asymptotic),
            real(r.bias_asymptotic),
        ]);
    }
    t.into_string()
}

/// One row per `N_K ∈ [0, N_V]` plus a summary.
///
/// CSV goes to `--out` (summary to `<out>.summary.json`) or to stdout with the
/// summary on stderr. JSON writes a single document.
pub fn run_ge_curve(cfg: &RunConfig) -> Result<(), CliError> {
    let curve = compute_curve(cfg)?;
    let summary = curve_summary(cfg, &curve);
    match cfg.format {
        Format::Csv => {
            let table = curve_csv(&curve);
            match &cfg.output_path {
                Some(p) => {
                    write_file(p, &table)?;
                    write_file(&sidecar(p, ".summary.json"), &json(&summary))?;
                }
                None => {
                    emit(None, &table)?;
                    eprint!("{}", json(&summary));
                }
            }
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                summary: CurveSummary<'a>,
                rows: Vec<CurveJsonRow>,
            }
            let rows = curve
                .rows
                .iter()
                .map(|r| CurveJsonRow {
                    n_k: r.n_k,
                    ge_empirical_eigen: r.ge_empirical_eigen,
                    ge_empirical_diamond: r.ge_empirical_diamond,
                    me_exact: r.exact.model_error,
                    bias_exact: r.exact.data_bias,
                    var_exact: r.exact.variance,
                    residual: r.exact.residual,
                    ge_asymptotic: r.ge_asymptotic,
                    me_asymptotic: r.me_asymptotic,
                    bias_asymptotic: r.bias_asymptotic,
                })
                .collect();
            emit(cfg.output_path.as_deref(), &json(&Doc { summary, rows }))?;
        }
    }
    Ok(())
}

pub const PHASE_COLUMNS: [&str; 12] = [
    "alpha",
    "eps",
    "alpha_index",
    "eps_index",
    "analytic_regime",
    "brute_force_regime",
    "r_star",
    "brute_force_r_star",
    "lambda_minus",
    "eps_star",
    "boundary_adjacent",
    "outside_hypothesis",
];

#[derive(Debug, Clone, Copy, Serialize)]
struct BoundaryPoint {
    alpha: f64,
    lambda_minus: f64,
    eps_star: f64,
}

fn boundary_curve(cfg: &RunConfig) -> Result<Vec<BoundaryPoint>, CliError> {
    linspace(cfg.alpha_grid.min, cfg.alpha_grid.max, BOUNDARY_POINTS)
        .into_iter()
        .map(|alpha| {
            let spec = MPSpectrum::new(alpha)?;
            Ok(BoundaryPoint { alpha, lambda_minus: spec.lambda_minus(), eps_star: collapse_threshold(&spec)? })
        })
        .collect()
}

fn phase_csv(cells: &[PhaseGridCell]) -> String {
    let mut t = Table::new(&PHASE_COLUMNS);
    for c in cells {
        t.row(&[
            real(c.analytic.alpha),
            real(c.analytic.eps),
            c.alpha_index.to_string(),
            c.eps_index.to_string(),
            c.analytic.regime.to_string(),
            c.brute_force.regime.to_string(),
            real(c.analytic.r_star),
            real(c.brute_force.r_star),
            real(c.lambda_minus),
            real(c.eps_star),
            c.boundary_adjacent.to_string(),
            c.analytic.outside_hypothesis.to_string(),
        ]);
    }
    t.into_string()
}

fn boundary_csv(points: &[BoundaryPoint]) -> String {
    let mut t = Table::new(&["alpha", "lambda_minus", "eps_star"]);
    for p in points {
        t.row(&[real(p.alpha), real(p.lambda_minus), real(p.eps_star)]);
    }
    t.into_string()
}

/// One row per `(α, ε)` cell plus the boundary curves `λ₋(α)` and `ε*(α)`.
///
/// CSV boundaries go to `<out>.boundaries.csv`; they are only written when
/// `--out` is given.
pub fn run_phase_diagram(cfg: &RunConfig) -> Result<(), CliError> {
    let alphas = linspace(cfg.alpha_grid.min, cfg.alpha_grid.max, cfg.alpha_grid.steps);
    let eps = linspace(cfg.eps_grid.min, cfg.eps_grid.max, cfg.eps_grid.steps);
    let cells = phase_grid(&alphas, &eps)?;
    let boundaries = boundary_curve(cfg)?;
    match cfg.format {
        Format::Csv => {
            emit(cfg.output_path.as_deref(), &phase_csv(&cells))?;
            if let Some(p) = &cfg.output_path {
                write_file(&sidecar(p, ".boundaries.csv"), &boundary_csv(&boundaries))?;
            }
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                config: &'a RunConfig,
                disagreements: usize,
                disagreements_off_boundary: usize,
                cells: &'a [PhaseGridCell],
                boundaries: &'a [BoundaryPoint],
            }
            let disagree = cells.iter().filter(|c| !c.agrees());
            let doc = Doc {
                config: cfg,
                disagreements: disagree.clone().count(),
                disagreements_off_boundary: disagree.filter(|c| !c.boundary_adjacent).count(),
                cells: &cells,
                boundaries: &boundaries,
            };
            emit(cfg.output_path.as_deref(), &json(&doc))?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub(crate) struct OptimalRankReport<'a> {
    pub config: &'a RunConfig,
    pub alpha: f64,
    pub regime: Regime,
    pub lambda_cut_star: f64,
    pub r_star: f64,
    pub n_k_star: usize,
    /// `None` when `ε ≥ 1` or the root overflows.
    pub second_root: Option<f64>,
    pub eps_star: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub outside_hypothesis: bool,
}

pub(crate) fn optimal_rank_report(cfg: &RunConfig) -> Result<OptimalRankReport<'_>, CliError> {
    let theory = EPCAConfig::new(cfg.n_v, cfg.d_samples, cfg.eps)?;
    let spec = theory.spectrum();
    let opt = optimal_rank(&theory)?;
    let second = if cfg.eps < 1.0 { finite(second_root(cfg.eps)?) } else { None };
    Ok(OptimalRankReport {
        config: cfg,
        alpha: theory.alpha(),
        regime: opt.regime,
        lambda_cut_star: opt.lambda_cut_star,
        r_star: opt.r_star,
        n_k_star: opt.n_k_star,
        second_root: second,
        eps_star: collapse_threshold(&spec)?,
        lambda_minus: spec.lambda_minus(),
        lambda_plus: spec.lambda_plus(),
        outside_hypothesis: opt.outside_hypothesis,
    })
}

/// Prints the closed-form optimum as JSON (to `--out` when given).
pub fn run_optimal_rank(cfg: &RunConfig) -> Result<(), CliError> {
    let report = optimal_rank_report(cfg)?;
    emit(cfg.output_path.as_deref(), &json(&report))
}
