//! Wishart Monte-Carlo engine for the finite-sample decomposition.
//!
//! Each realization draws `X` (`D × N_V`, i.i.d. standard normal) from its own
//! ChaCha20 stream `(seed, realization_id)`, so realizations can be generated
//! in any order or in parallel and still reproduce bit for bit. Reductions run
//! over realizations in id order with compensated summation.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kl::{
    eigen_to_full_kl, kl_diag, kl_standard_to_diag, DiagGaussian, EigenModel, ORTHONORMAL_TOL,
};
use crate::sum::{compensated_mean, NeumaierSum};
use crate::theory::{ge_at_rank, optimal_rank, EPCAConfig, OptimalRank};

/// Floor applied to sampled eigenvalues before they are used in logs.
pub const EIGENVALUE_FLOOR: f64 = 1e-300;

/// One empirical covariance `Σᵐ = (1/D)·XᵀX` and its eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartSample {
    pub realization_id: u64,
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub frame: DMatrix<f64>,
}

impl WishartSample {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `frame · diag(eigenvalues) · frameᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.frame.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(&self.eigenvalues) {
            col *= l;
        }
        scaled * self.frame.transpose()
    }
}

fn check_sizes(n_v: usize, d_samples: usize) -> Result<()> {
    if n_v == 0 {
        return Err(Error::Argument("visible dimension must be at least 1".into()));
    }
    if d_samples <= n_v {
        return Err(Error::Argument(format!("sample count {d_samples} must exceed the dimension {n_v}")));
    }
    Ok(())
}

/// Random stream for one realization.
pub fn realization_rng(seed: u64, realization_id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(realization_id);
    rng
}

/// Data matrix `X` (`D × N_V`) of one realization.
pub fn sample_data(n_v: usize, d_samples: usize, seed: u64, realization_id: u64) -> DMatrix<f64> {
    let mut rng = realization_rng(seed, realization_id);
    DMatrix::from_fn(d_samples, n_v, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draws the empirical covariance of realization `realization_id` and diagonalizes it.
pub fn sample_wishart(n_v: usize, d_samples: usize, seed: u64, realization_id: u64) -> Result<WishartSample> {
    check_sizes(n_v, d_samples)?;
    let x = sample_data(n_v, d_samples, seed, realization_id);
    let gram = x.tr_mul(&x) / d_samples as f64;
    let sigma = (&gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sigma, f64::EPSILON, 0)
        .ok_or_else(|| Error::Internal(format!("eigendecomposition of realization {realization_id} failed")))?;

    let mut order: Vec<usize> = (0..n_v).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(EIGENVALUE_FLOOR)).collect();
    let frame = DMatrix::from_fn(n_v, n_v, |r, c| eig.eigenvectors[(r, order[c])]);

    let gram = frame.tr_mul(&frame);
    let max_dev = (0..n_v)
        .flat_map(|i| (0..n_v).map(move |j| (i, j)))
        .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    if !(max_dev <= ORTHONORMAL_TOL) {
        return Err(Error::Internal(format!("eigenvector frame deviates from orthonormal by {max_dev:e}")));
    }
    Ok(WishartSample { realization_id, eigenvalues, frame })
}

/// Realizations `0..n_realizations`, in id order.
pub fn sample_realizations(n_v: usize, d_samples: usize, seed: u64, n_realizations: usize) -> Result<Vec<WishartSample>> {
    check_sizes(n_v, d_samples)?;
    (0..n_realizations as u64)
        .into_par_iter()
        .map(|id| sample_wishart(n_v, d_samples, seed, id))
        .collect()
}

fn check_rank(n_keep: usize, n_v: usize, eps: f64) -> Result<()> {
    if n_keep > n_v {
        return Err(Error::Argument(format!("n_keep = {n_keep} exceeds dimension {n_v}")));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Argument(format!("noise floor must be finite and > 0, got {eps}")));
    }
    Ok(())
}

fn truncated_spectrum(eigenvalues: &[f64], n_keep: usize, eps: f64) -> Vec<f64> {
    let mut v = eigenvalues[..n_keep].to_vec();
    v.resize(eigenvalues.len(), eps);
    v
}

/// Eigen-ε-PCA model: the empirical frame with the top `n_keep` eigenvalues
/// kept and the rest pinned at `eps`.
pub fn build_eigen_model(sample: &WishartSample, n_keep: usize, eps: f64) -> Result<EigenModel> {
    check_rank(n_keep, sample.dim(), eps)?;
    // The frame was checked for orthonormality when the sample was drawn.
    Ok(EigenModel::from_checked_parts(sample.frame.clone(), truncated_spectrum(&sample.eigenvalues, n_keep, eps)))
}

/// ◇-model: the same eigenvalues on the diagonal of the standard basis.
pub fn build_diamond_model(sample: &WishartSample, n_keep: usize, eps: f64) -> Result<DiagGaussian> {
    check_rank(n_keep, sample.dim(), eps)?;
    DiagGaussian::new(truncated_spectrum(&sample.eigenvalues, n_keep, eps))
}

/// m-projection of `N(0, I)` onto the ◇-family: `diag(1,…,1, ε,…,ε)`.
pub fn m_projection(n_v: usize, n_keep: usize, eps: f64) -> Result<DiagGaussian> {
    check_rank(n_keep, n_v, eps)?;
    let mut v = vec![1.0; n_keep];
    v.resize(n_v, eps);
    DiagGaussian::new(v)
}

/// e-mixture of diagonal Gaussians and its normalization deficit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EMixture {
    /// Per-coordinate harmonic mean of the model variances.
    pub variances: Vec<f64>,
    /// `F̄ = ½ Σᵢ (⟨ln vᵢ⟩ − ln h̄ᵢ) ≥ 0`.
    pub f_bar: f64,
}

impl EMixture {
    pub fn as_gaussian(&self) -> DiagGaussian {
        DiagGaussian::new(self.variances.clone()).expect("harmonic means of positive values are positive")
    }
}

/// For diagonal Gaussians the e-mixture `exp(⟨ln Qᵐ⟩ + F̄)` has precision equal
/// to the average precision, i.e. variances are harmonic means.
pub fn e_mixture(models: &[DiagGaussian]) -> Result<EMixture> {
    let first = models.first().ok_or_else(|| Error::Argument("e-mixture of an empty list".into()))?;
    let n = first.dim();
    if let Some(bad) = models.iter().find(|m| m.dim() != n) {
        return Err(Error::Shape { expected: n, got: bad.dim() });
    }
    if models.len() == 1 {
        // Avoid the round trip through 1/(1/v).
        return Ok(EMixture { variances: first.variances().to_vec(), f_bar: 0.0 });
    }
    let m = models.len() as f64;
    let mut variances = Vec::with_capacity(n);
    let mut f_bar = NeumaierSum::new();
    for i in 0..n {
        let mut precision = NeumaierSum::new();
        let mut log_var = NeumaierSum::new();
        for model in models {
            let v = model.variances()[i];
            precision.add(v.recip());
            log_var.add(v.ln());
        }
        let h = m / precision.value();
        // Jensen makes each term non-negative; clip round-off below zero.
        f_bar.add((log_var.value() / m - h.ln()).max(0.0));
        variances.push(h);
    }
    Ok(EMixture { variances, f_bar: 0.5 * f_bar.value() })
}

/// `⟨KL(Q̄ ‖ Qᵐ)⟩_m`, which equals `F̄`.
pub fn variance_term(mixture: &EMixture, models: &[DiagGaussian]) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::Argument("variance term of an empty list".into()));
    }
    let q_bar = mixture.as_gaussian();
    let kls = models.iter().map(|m| kl_diag(&q_bar, m)).collect::<Result<Vec<_>>>()?;
    Ok(compensated_mean(&kls))
}

/// Exact finite-sample decomposition for one rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompResult {
    /// `⟨KL(P ‖ Q̃ᵐ)⟩_m`.
    pub ge: f64,
    /// `KL(P ‖ Q⁰)`.
    pub model_error: f64,
    /// Algebraic form `KL(P ‖ Q̄) − KL(P ‖ Q⁰)`.
    pub data_bias: f64,
    /// `⟨KL(Q̄ ‖ Q̃ᵐ)⟩_m`.
    pub variance: f64,
    /// `ge − model_error − data_bias − variance`.
    pub residual: f64,
    /// Pythagorean form `KL(Q⁰ ‖ Q̄)`.
    pub data_bias_gpt: f64,
    /// Normalization deficit of the e-mixture.
    pub f_bar: f64,
}

impl DecompResult {
    /// `KL(P‖Q̄) − KL(P‖Q⁰) − KL(Q⁰‖Q̄)`.
    pub fn pythagorean_gap(&self) -> f64 {
        self.data_bias - self.data_bias_gpt
    }
}

/// Decomposes the average divergence of `models` from `N(0, I)` around the
/// m-projection `q0`.
pub fn decompose_models(models: &[DiagGaussian], q0: &DiagGaussian) -> Result<DecompResult> {
    let mixture = e_mixture(models)?;
    let q_bar = mixture.as_gaussian();
    let ge = compensated_mean(&models.iter().map(kl_standard_to_diag).collect::<Vec<_>>());
    let model_error = kl_standard_to_diag(q0);
    let to_mixture = kl_standard_to_diag(&q_bar);
    let data_bias = to_mixture - model_error;
    let variance = variance_term(&mixture, models)?;
    let mut residual = NeumaierSum::new();
    residual.extend([ge, -model_error, -data_bias, -variance]);
    Ok(DecompResult {
        ge,
        model_error,
        data_bias,
        variance,
        residual: residual.value(),
        data_bias_gpt: kl_diag(q0, &q_bar)?,
        f_bar: mixture.f_bar,
    })
}

fn decompose_samples(samples: &[WishartSample], n_v: usize, n_keep: usize, eps: f64) -> Result<DecompResult> {
    let models = samples.iter().map(|s| build_diamond_model(s, n_keep, eps)).collect::<Result<Vec<_>>>()?;
    decompose_models(&models, &m_projection(n_v, n_keep, eps)?)
}

/// Three-component decomposition of the ◇-model GE at rank `n_keep`
/// over `n_realizations` Wishart draws.
pub fn decompose(
    n_v: usize,
    d_samples: usize,
    eps: f64,
    n_keep: usize,
    n_realizations: usize,
    seed: u64,
) -> Result<DecompResult> {
    check_rank(n_keep, n_v, eps)?;
    if n_realizations == 0 {
        return Err(Error::Argument("at least one realization is required".into()));
    }
    let samples = sample_realizations(n_v, d_samples, seed, n_realizations)?;
    decompose_samples(&samples, n_v, n_keep, eps)
}

/// Inputs of [`empirical_ge_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveConfig {
    pub n_v: usize,
    pub d_samples: usize,
    pub eps: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Also evaluate the eigen-ε-PCA GE with the full `N_V × N_V` covariance
    /// (one Cholesky factorization per realization and rank).
    pub full_matrix: bool,
}

impl CurveConfig {
    pub fn new(n_v: usize, d_samples: usize, eps: f64, realizations: usize, seed: u64) -> Self {
        Self { n_v, d_samples, eps, realizations, seed, full_matrix: true }
    }
}

/// One rank of the empirical GE curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub n_k: usize,
    /// Full-matrix eigen-model GE; `None` when not requested.
    pub ge_empirical_eigen: Option<f64>,
    pub ge_empirical_diamond: f64,
    pub exact: DecompResult,
    pub ge_asymptotic: f64,
    pub me_asymptotic: f64,
    pub bias_asymptotic: f64,
    /// `max_m |KL_full − KL_diag|` at this rank; `None` without the full matrix.
    pub max_rotation_gap: Option<f64>,
}

/// The whole curve plus the closed-form optimum for the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeCurve {
    pub config: CurveConfig,
    pub rows: Vec<CurveRow>,
    pub optimum: OptimalRank,
}

impl GeCurve {
    /// GE used for the empirical argmin: full-matrix when present, else ◇.
    pub fn empirical_ge(&self, row: &CurveRow) -> f64 {
        row.ge_empirical_eigen.unwrap_or(row.ge_empirical_diamond)
    }

    /// Rank of the smallest empirical GE; exact ties go to the smaller rank.
    pub fn empirical_argmin(&self) -> usize {
        let mut best = (f64::INFINITY, 0);
        for row in &self.rows {
            let g = self.empirical_ge(row);
            if g < best.0 {
                best = (g, row.n_k);
            }
        }
        best.1
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.exact.residual.abs()).fold(0.0, f64::max)
    }

    pub fn max_rotation_gap(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.max_rotation_gap).try_fold(0.0_f64, |acc, g| g.map(|g| acc.max(g)))
    }

    /// `max_{N_K} |empirical ◇ GE − asymptotic GE| / N_V`.
    pub fn per_direction_gap(&self) -> f64 {
        let n = self.config.n_v as f64;
        self.rows.iter().map(|r| (r.ge_empirical_diamond - r.ge_asymptotic).abs() / n).fold(0.0, f64::max)
    }
}

/// Full-matrix and diagonal KL for every rank of one realization.
fn realization_kls(sample: &WishartSample, eps: f64) -> Result<Vec<(f64, f64)>> {
    (0..=sample.dim())
        .map(|k| {
            let full = eigen_to_full_kl(&build_eigen_model(sample, k, eps)?)?;
            let diag = kl_standard_to_diag(&build_diamond_model(sample, k, eps)?);
            Ok((full, diag))
        })
        .collect()
}

/// Empirical GE for every `N_K ∈ [0, N_V]`, reusing the same realizations at
/// every rank, next to the exact decomposition and the asymptotic closed forms.
pub fn empirical_ge_curve(config: &CurveConfig) -> Result<GeCurve> {
    let cfg = EPCAConfig::new(config.n_v, config.d_samples, config.eps)?;
    if config.realizations == 0 {
        return Err(Error::Argument("at least one realization is required".into()));
    }
    let n_v = config.n_v;
    let samples = sample_realizations(n_v, config.d_samples, config.seed, config.realizations)?;

    let full: Option<Vec<Vec<(f64, f64)>>> = if config.full_matrix {
        Some(samples.par_iter().map(|s| realization_kls(s, config.eps)).collect::<Result<_>>()?)
    } else {
        None
    };

    let rows = (0..=n_v)
        .into_par_iter()
        .map(|k| {
            let exact = decompose_samples(&samples, n_v, k, config.eps)?;
            let asym = ge_at_rank(k, &cfg)?;
            let (ge_eigen, gap) = match &full {
                Some(per_real) => {
                    let values: Vec<f64> = per_real.iter().map(|v| v[k].0).collect();
                    let gap = per_real.iter().map(|v| (v[k].0 - v[k].1).abs()).fold(0.0, f64::max);
                    (Some(compensated_mean(&values)), Some(gap))
                }
                None => (None, None),
            };
            Ok(CurveRow {
                n_k: k,
                ge_empirical_eigen: ge_eigen,
                ge_empirical_diamond: exact.ge,
                exact,
                ge_asymptotic: asym.ge,
                me_asymptotic: asym.model_error,
                bias_asymptotic: asym.data_bias,
                max_rotation_gap: gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GeCurve { config: *config, rows, optimum: optimal_rank(&cfg)? })
}
