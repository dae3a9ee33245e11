//! ε-PCA generalization error: exact KL decomposition, Marchenko–Pastur
//! asymptotics, phase classification and Wishart Monte-Carlo verification.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kl;
pub mod mc;
pub mod mp;
pub mod quadrature;
pub mod roots;
pub mod sum;
pub mod theory;

pub use error::{Error, Result};
pub use kl::{
    cost_f, cost_f_prime, eigen_to_full_kl, kl_diag, kl_isotropic_to_truncated, kl_standard_to_diag,
    kl_zero_mean, DiagGaussian, EigenModel, ZeroMeanGaussian,
};
pub use mc::{
    decompose, e_mixture, empirical_ge_curve, sample_wishart, CurveConfig, CurveRow, DecompResult, EMixture,
    GeCurve, WishartSample,
};
pub use mp::{MPSpectrum, SpectralIntegrals};
pub use theory::{
    classify_phase, collapse_threshold, ge_asymptotic, optimal_rank, phase_grid, second_root, AsymptoticPoint,
    EPCAConfig, OptimalRank, PhaseGridCell, PhasePoint, Regime,
};
