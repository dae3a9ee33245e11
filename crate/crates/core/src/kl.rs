//! Exact KL divergences between zero-mean Gaussians.
//!
//! All divergences are in nats. The reference distribution of the ε-PCA
//! problem is the standard normal `P = N(0, I)`, so most helpers here take
//! `P` implicitly and only the model covariance as input.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::sum::{compensated_sum, NeumaierSum};

/// Per-entry tolerance for `frameᵀ·frame = I`.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Per-direction Gaussian KL cost `f(x) = 1/x + ln x`.
///
/// Decreasing on `(0, 1)`, increasing on `(1, ∞)`, global minimum `f(1) = 1`.
/// Convex only on `(0, 2]` since `f''(x) = (2 − x)/x³`.
pub fn cost_f(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("cost function needs x > 0, got {x}")));
    }
    Ok(x.recip() + x.ln())
}

/// Derivative `f'(x) = (x - 1) / x²`.
pub fn cost_f_prime(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("cost function needs x > 0, got {x}")));
    }
    Ok((x - 1.0) / (x * x))
}

fn check_variances(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Validation(format!("{what}: dimension must be at least 1")));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("{what}: entry {i} is {v}, must be finite and > 0")));
    }
    Ok(())
}

/// Zero-mean Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    variances: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        check_variances(&variances, "diagonal Gaussian")?;
        Ok(Self { variances })
    }

    /// `N(0, v·I)` in dimension `dim`.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; dim])
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.variances))
    }
}

/// Zero-mean Gaussian `N(0, U·diag(λ)·Uᵀ)` given by an orthonormal frame and
/// the eigenvalue attached to each frame column.
///
/// Eigenvalues are positive. They are usually non-increasing, but a trained
/// ε-PCA model that keeps empirical eigenvalues below the noise floor is not,
/// so ordering is not enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    frame: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl EigenModel {
    pub fn new(frame: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        check_variances(&eigenvalues, "eigen model")?;
        let n = eigenvalues.len();
        if frame.nrows() != n {
            return Err(Error::Shape { expected: n, got: frame.nrows() });
        }
        if frame.ncols() != n {
            return Err(Error::Shape { expected: n, got: frame.ncols() });
        }
        let gram = frame.transpose() * &frame;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                let dev = (gram[(i, j)] - target).abs();
                if !(dev <= ORTHONORMAL_TOL) {
                    return Err(Error::Validation(format!(
                        "frame is not orthonormal: |(UᵀU)[{i},{j}] - δ| = {dev:e}"
                    )));
                }
            }
        }
        Ok(Self { frame, eigenvalues })
    }

    /// Skips validation; the caller has already checked the frame and values.
    pub(crate) fn from_checked_parts(frame: DMatrix<f64>, eigenvalues: Vec<f64>) -> Self {
        debug_assert_eq!(frame.ncols(), eigenvalues.len());
        Self { frame, eigenvalues }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Assembles `U·diag(λ)·Uᵀ`, symmetrized against round-off.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut scaled = self.frame.clone();
        for (mut col, &lambda) in scaled.column_iter_mut().zip(&self.eigenvalues) {
            col *= lambda;
        }
        let cov = scaled * self.frame.transpose();
        (&cov + cov.transpose()) * 0.5
    }
}

/// A zero-mean Gaussian model whose divergence from `N(0, I)` can be evaluated.
pub trait ZeroMeanGaussian {
    fn dim(&self) -> usize;
    /// `KL(N(0, I) ‖ self)` in nats.
    fn kl_from_standard(&self) -> Result<f64>;
}

impl ZeroMeanGaussian for DiagGaussian {
    fn dim(&self) -> usize {
        DiagGaussian::dim(self)
    }

    fn kl_from_standard(&self) -> Result<f64> {
        Ok(kl_standard_to_diag(self))
    }
}

impl ZeroMeanGaussian for EigenModel {
    fn dim(&self) -> usize {
        EigenModel::dim(self)
    }

    fn kl_from_standard(&self) -> Result<f64> {
        eigen_to_full_kl(self)
    }
}

fn check_square(m: &DMatrix<f64>, expected: usize) -> Result<()> {
    if m.nrows() != expected {
        return Err(Error::Shape { expected, got: m.nrows() });
    }
    if m.ncols() != expected {
        return Err(Error::Shape { expected, got: m.ncols() });
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = m[(i, j)].abs().max(m[(j, i)].abs()).max(1.0);
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Validation(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

fn factor(m: &DMatrix<f64>, which: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Decomposition(format!("{which} covariance is not positive definite")))
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * compensated_sum((0..l.nrows()).map(|i| l[(i, i)].ln()))
}

/// `KL(N(0, Σ₀) ‖ N(0, Σ₁)) = ½[tr(Σ₁⁻¹Σ₀) − n + ln(|Σ₁|/|Σ₀|)]`.
///
/// Both log-determinants and the trace come from Cholesky factors; a failed
/// factorization reports the matrix as not positive definite.
pub fn kl_zero_mean(sigma0: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> Result<f64> {
    let n = sigma0.nrows();
    check_square(sigma0, n)?;
    check_square(sigma1, n)?;
    if n == 0 {
        return Err(Error::Validation("covariance must be at least 1x1".into()));
    }
    check_symmetric(sigma0)?;
    check_symmetric(sigma1)?;
    let chol0 = factor(sigma0, "first")?;
    let chol1 = factor(sigma1, "second")?;
    let solved = chol1.solve(sigma0);
    let trace = compensated_sum((0..n).map(|i| solved[(i, i)]));
    Ok(0.5 * (trace - n as f64 + log_det(&chol1) - log_det(&chol0)))
}

/// `KL(N(0, diag p) ‖ N(0, diag q))`.
pub fn kl_diag(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Shape { expected: p.dim(), got: q.dim() });
    }
    let terms = p.variances.iter().zip(&q.variances).map(|(&a, &b)| {
        let ratio = a / b;
        ratio - 1.0 - ratio.ln()
    });
    Ok(0.5 * compensated_sum(terms))
}

/// `KL(N(0, I) ‖ N(0, diag d)) = ½ Σᵢ (f(dᵢ) − 1)`.
pub fn kl_standard_to_diag(q: &DiagGaussian) -> f64 {
    let mut acc = NeumaierSum::new();
    for &d in &q.variances {
        acc.add(d.recip());
        acc.add(d.ln());
        acc.add(-1.0);
    }
    0.5 * acc.value()
}

/// Per-realization ε-PCA divergence from the spectrum alone:
/// `½[Σ_{i≤k}(1/λᵢ + ln λᵢ) + (n − k)(1/ε + ln ε) − n]`.
///
/// The first `n_keep` entries of `eigenvalues` are the retained ones; the
/// caller passes them sorted descending.
pub fn kl_isotropic_to_truncated(eigenvalues: &[f64], n_keep: usize, eps: f64) -> Result<f64> {
    let n = eigenvalues.len();
    if n_keep > n {
        return Err(Error::Argument(format!("n_keep = {n_keep} exceeds dimension {n}")));
    }
    let f_eps = cost_f(eps)?;
    let mut acc = NeumaierSum::new();
    for &lambda in &eigenvalues[..n_keep] {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("eigenvalue {lambda} is not positive")));
        }
        acc.add(lambda.recip());
        acc.add(lambda.ln());
    }
    acc.add((n - n_keep) as f64 * f_eps);
    acc.add(-(n as f64));
    Ok(0.5 * acc.value())
}

/// `KL(N(0, I) ‖ model)` evaluated on the assembled `n × n` covariance.
///
/// The frame is used explicitly: the covariance `U·diag(λ)·Uᵀ` is formed and
/// factored, then `tr(Σ⁻¹) = ‖L⁻¹‖²_F` and `ln|Σ| = 2 Σ ln Lᵢᵢ`.
pub fn eigen_to_full_kl(model: &EigenModel) -> Result<f64> {
    let n = model.dim();
    let chol = factor(&model.covariance(), "model")?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Decomposition("singular Cholesky factor".into()))?;
    let trace_inv = compensated_sum(l_inv.iter().map(|x| x * x));
    Ok(0.5 * (trace_inv - n as f64 + log_det(&chol)))
}

/// Differential entropy of `N(0, I_n)`: `(n/2)·ln(2πe)`.
pub fn standard_normal_entropy(dim: usize) -> f64 {
    0.5 * dim as f64 * (2.0 * PI * std::f64::consts::E).ln()
}

/// Cross-entropy `H(P; Q) = KL(P ‖ Q) + H(P)` with `P = N(0, I_{p_dim})`.
pub fn cross_entropy<Q: ZeroMeanGaussian + ?Sized>(p_dim: usize, q: &Q) -> Result<f64> {
    if q.dim() != p_dim {
        return Err(Error::Shape { expected: p_dim, got: q.dim() });
    }
    Ok(q.kl_from_standard()? + standard_normal_entropy(p_dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_orthonormal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        a.qr().q()
    }

    fn random_pd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn cost_f_values() {
        assert_eq!(cost_f(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(cost_f(0.5).unwrap(), 2.0 + 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(cost_f(0.5).unwrap(), 1.306_852_819_440_054_7, epsilon = 1e-14);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(cost_f(e).unwrap(), 1.0 / e + 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cost_f_rejects_non_positive() {
        for x in [0.0, -1.0, f64::NAN] {
            assert!(matches!(cost_f(x), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn kl_zero_mean_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_abs_diff_eq!(kl_zero_mean(&i3, &i3).unwrap(), 0.0, epsilon = 1e-15);

        let i1 = DMatrix::<f64>::identity(1, 1);
        let half = DMatrix::from_element(1, 1, 0.5);
        let expected = 0.5 * (2.0 + 0.5f64.ln() - 1.0);
        assert_abs_diff_eq!(kl_zero_mean(&i1, &half).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.153_426_409_720_027_3, epsilon = 1e-15);

        let i2 = DMatrix::<f64>::identity(2, 2);
        let two = i2.clone() * 2.0;
        assert_abs_diff_eq!(
            kl_zero_mean(&i2, &two).unwrap(),
            0.5 * (1.0 - 2.0 + 2.0 * 2f64.ln()),
            epsilon = 1e-15
        );
    }

    #[test]
    fn kl_zero_mean_errors() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(kl_zero_mean(&i2, &i3), Err(Error::Shape { .. })));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(kl_zero_mean(&i2, &indefinite), Err(Error::Decomposition(_))));
        assert!(matches!(kl_zero_mean(&indefinite, &i2), Err(Error::Decomposition(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(kl_zero_mean(&i2, &asym), Err(Error::Validation(_))));
    }

    #[test]
    fn truncated_examples() {
        let ones = vec![1.0; 5];
        assert_abs_diff_eq!(kl_isotropic_to_truncated(&ones, 5, 0.3).unwrap(), 0.0, epsilon = 1e-15);

        let eps: f64 = 0.5;
        let lambdas: Vec<f64> = (0..64).map(|i| 3.0 - i as f64 * 0.04).collect();
        let expected = 32.0 * (1.0 / eps + eps.ln() - 1.0);
        assert_abs_diff_eq!(kl_isotropic_to_truncated(&lambdas, 0, eps).unwrap(), expected, epsilon = 1e-13);

        assert!(matches!(kl_isotropic_to_truncated(&ones, 6, 0.5), Err(Error::Argument(_))));
        assert!(matches!(kl_isotropic_to_truncated(&ones, 2, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn truncated_matches_assembled_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut lambdas: Vec<f64> = (0..9).map(|_| rng.random_range(0.05..4.0)).collect();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let eps = 0.37;
        let mut diag = lambdas[..3].to_vec();
        diag.extend(std::iter::repeat(eps).take(6));
        let sigma1 = DMatrix::from_diagonal(&DVector::from_vec(diag));
        let full = kl_zero_mean(&DMatrix::identity(9, 9), &sigma1).unwrap();
        let fast = kl_isotropic_to_truncated(&lambdas, 3, eps).unwrap();
        assert_abs_diff_eq!(full, fast, epsilon = 1e-13);
    }

    #[test]
    fn eigen_model_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(EigenModel::new(bad, vec![1.0, 1.0]), Err(Error::Validation(_))));
        assert!(matches!(
            EigenModel::new(DMatrix::identity(2, 2), vec![1.0, 1.0, 1.0]),
            Err(Error::Shape { .. })
        ));
        assert!(EigenModel::new(DMatrix::identity(2, 2), vec![1.0, -1.0]).is_err());
        assert!(DiagGaussian::new(vec![]).is_err());
        assert!(DiagGaussian::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn eigen_full_kl_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let identity = EigenModel::new(DMatrix::identity(4, 4), vec![1.0; 4]).unwrap();
        assert_abs_diff_eq!(eigen_to_full_kl(&identity).unwrap(), 0.0, epsilon = 1e-14);

        let rotated = EigenModel::new(random_orthonormal(6, &mut rng), vec![1.0; 6]).unwrap();
        assert_abs_diff_eq!(eigen_to_full_kl(&rotated).unwrap(), 0.0, epsilon = 1e-13);

        let mut lambdas: Vec<f64> = (0..12).map(|_| rng.random_range(0.03..3.5)).collect();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let model = EigenModel::new(random_orthonormal(12, &mut rng), lambdas.clone()).unwrap();
        let full = eigen_to_full_kl(&model).unwrap();
        let spectral = kl_isotropic_to_truncated(&lambdas, 12, 0.5).unwrap();
        assert_abs_diff_eq!(full, spectral, epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_examples() {
        let q = DiagGaussian::isotropic(1, 1.0).unwrap();
        assert_abs_diff_eq!(cross_entropy(1, &q).unwrap(), 0.5 * (2.0 * PI).ln() + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cross_entropy(1, &q).unwrap(), 1.418_938_533_204_672_7, epsilon = 1e-14);

        // Two coordinates each contributing KL 0.25.
        let v = {
            // solve ½(f(v) - 1) = 0.25 on v > 1 by bisection
            let (mut lo, mut hi) = (1.0f64, 10.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if 0.5 * (cost_f(mid).unwrap() - 1.0) < 0.25 { lo = mid } else { hi = mid }
            }
            0.5 * (lo + hi)
        };
        let q2 = DiagGaussian::isotropic(2, v).unwrap();
        assert_abs_diff_eq!(kl_standard_to_diag(&q2), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            cross_entropy(2, &q2).unwrap(),
            (2.0 * PI * std::f64::consts::E).ln() + 0.5,
            epsilon = 1e-12
        );
        assert!(matches!(cross_entropy(3, &q2), Err(Error::Shape { .. })));
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(seed in any::<u64>(), n in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_pd(n, &mut rng);
            let b = random_pd(n, &mut rng);
            prop_assert!(kl_zero_mean(&a, &b).unwrap() >= -1e-12);
            prop_assert!(kl_zero_mean(&a, &a).unwrap().abs() <= 1e-10);
        }

        #[test]
        fn kl_is_rotation_invariant(seed in any::<u64>(), n in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
            let r = random_orthonormal(n, &mut rng);
            let diag = DMatrix::from_diagonal(&DVector::from_vec(d.clone()));
            let rotated = &r * &diag * r.transpose();
            let rotated = (&rotated + rotated.transpose()) * 0.5;
            let i = DMatrix::identity(n, n);
            let lhs = kl_zero_mean(&i, &rotated).unwrap();
            let rhs = kl_zero_mean(&i, &diag).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-11, "{lhs} vs {rhs}");
        }

        #[test]
        fn cost_f_is_convex_below_two(a in 1e-3f64..1.99, frac in 0.0f64..1.0, t in 0.0f64..1.0) {
            let b = a + frac * (2.0 - a);
            let mid = t * a + (1.0 - t) * b;
            let lhs = cost_f(mid).unwrap();
            let rhs = t * cost_f(a).unwrap() + (1.0 - t) * cost_f(b).unwrap();
            prop_assert!(lhs <= rhs + 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn cost_f_is_unimodal(x in 1e-3f64..50.0, step in 1e-6f64..10.0) {
            let y = if x < 1.0 { (x + step).min(1.0) } else { x + step };
            if x < 1.0 {
                prop_assert!(cost_f(y).unwrap() <= cost_f(x).unwrap());
            } else {
                prop_assert!(cost_f(y).unwrap() >= cost_f(x).unwrap());
            }
        }

        #[test]
        fn gibbs_identity(seed in any::<u64>(), n in 1usize..=16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = DiagGaussian::new((0..n).map(|_| rng.random_range(0.05..5.0)).collect()).unwrap();
            let kl = q.kl_from_standard().unwrap();
            let gap = cross_entropy(n, &q).unwrap() - standard_normal_entropy(n) - kl;
            prop_assert!(gap.abs() <= 1e-13);
        }
    }
}
