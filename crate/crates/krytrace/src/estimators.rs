//! Trace / log-determinant estimates from compressions, the Hutchinson
//! Monte Carlo baseline, relative-error metrics, and the probe split
//! against a known eigenbasis.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::la;
use crate::linop::{EigenBasis, HermitianOperator, SpectralModel};
use crate::sketch::{CompressionResult, SketchConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Krylov,
    Subspace,
    Hutchinson,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Krylov => "krylov",
            Algorithm::Subspace => "subspace",
            Algorithm::Hutchinson => "hutchinson",
        }
    }
}

/// One estimator outcome.
#[derive(Clone, Debug)]
pub struct EstimateRecord {
    /// `Tr(T)`.
    pub trace_estimate: f64,
    /// `log det(I + T)`.
    pub logdet_estimate: f64,
    pub config: SketchConfig,
    pub algorithm: Algorithm,
    pub m_effective: usize,
    pub deflated: bool,
}

/// Estimates from a compression: `Tr(T)` and `log det(I + T)`.
pub fn estimate_from_compression(
    result: &CompressionResult,
    config: &SketchConfig,
    algorithm: Algorithm,
) -> Result<EstimateRecord> {
    let logdet_estimate = la::logdet_shifted_cholesky(&result.t)?;
    Ok(EstimateRecord {
        trace_estimate: result.trace(),
        logdet_estimate,
        config: *config,
        algorithm,
        m_effective: result.m,
        deflated: result.deflated,
    })
}

/// Hutchinson Monte Carlo trace estimate with Rademacher probes.
///
/// Each sample draws its probe from a seed derived as `seed + index`, and
/// samples are accumulated in index order, so the result does not depend
/// on how the work is batched.
pub fn hutchinson_trace(a: &dyn HermitianOperator, samples: usize, seed: u64) -> Result<f64> {
    if samples < 1 {
        return Err(Error::InvalidParameter(
            "at least one Hutchinson sample is required".into(),
        ));
    }
    let n = a.dim();
    let batch = 64usize;
    let mut total = 0.0;
    let mut start = 0usize;
    while start < samples {
        let b = batch.min(samples - start);
        let mut probes = DMatrix::<f64>::zeros(n, b);
        for j in 0..b {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((start + j) as u64));
            let col = &mut probes.as_mut_slice()[j * n..(j + 1) * n];
            for v in col.iter_mut() {
                *v = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            }
        }
        let applied = a.apply(&probes);
        for j in 0..b {
            total += probes.column(j).dot(&applied.column(j));
        }
        start += b;
    }
    Ok(total / samples as f64)
}

/// Relative errors `(exact - estimate) / exact` for trace and shifted
/// log-determinant. Exact references must be strictly positive.
pub fn relative_errors(
    exact_trace: f64,
    exact_logdet: f64,
    rec: &EstimateRecord,
) -> Result<(f64, f64)> {
    if !(exact_trace > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exact trace must be positive, got {exact_trace}"
        )));
    }
    if !(exact_logdet > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exact log-determinant must be positive, got {exact_logdet}"
        )));
    }
    Ok((
        (exact_trace - rec.trace_estimate) / exact_trace,
        (exact_logdet - rec.logdet_estimate) / exact_logdet,
    ))
}

/// The probe expressed in the operator's eigenbasis, split at the target
/// rank: `Omega_hat_1 = U_1' Omega` (k x l), `Omega_hat_2 = U_2' Omega`.
pub struct SpectralSplit {
    pub omega1: DMatrix<f64>,
    pub omega2: DMatrix<f64>,
    pub k: usize,
}

/// Split a probe against the model's eigenbasis at index `k`.
///
/// Fails if the eigenbasis is unknown or if `Omega_hat_1` is numerically
/// rank deficient (the full-row-rank assumption behind the structural
/// bounds).
pub fn spectral_split(model: &SpectralModel, omega: &DMatrix<f64>, k: usize) -> Result<SpectralSplit> {
    let n = model.dim();
    let l = omega.ncols();
    if omega.nrows() != n {
        return Err(Error::Shape(format!(
            "probe has {} rows, model order is {n}",
            omega.nrows()
        )));
    }
    if k >= n || k > l || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "split index k = {k} must satisfy 1 <= k <= l = {l} and k < n = {n}"
        )));
    }
    let basis = model.basis().ok_or_else(|| {
        Error::InvalidParameter("spectral split requires a known eigenbasis".into())
    })?;
    let (omega1, omega2) = match basis {
        EigenBasis::Identity => (
            omega.rows(0, k).into_owned(),
            omega.rows(k, n - k).into_owned(),
        ),
        EigenBasis::Dense(u) => {
            let hat = u.tr_mul(omega);
            (hat.rows(0, k).into_owned(), hat.rows(k, n - k).into_owned())
        }
    };
    // rank(Omega_hat_1) must equal k; same cutoff as the pseudo-inverse.
    let gram = &omega1 * omega1.transpose();
    let eig = la::sym_eig(&gram)?;
    let smax = eig.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    let smin = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    if smax == 0.0 || smin < 1e-12 * smax {
        return Err(Error::RankDeficient(format!(
            "Omega_hat_1 has numerical rank below k = {k} (sigma_min = {smin:.3e})"
        )));
    }
    Ok(SpectralSplit { omega1, omega2, k })
}

/// Interaction norm `|Omega_hat_2 * pinv(Omega_hat_1)|_2`, the only random
/// quantity entering the structural bounds.
pub fn interaction_norm(split: &SpectralSplit) -> Result<f64> {
    let prod = la::pinv_times(&split.omega1, &split.omega2)?;
    Ok(la::spectral_norm(&prod))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{
        assemble_dense, dense_operator_with_model, make_diagonal_operator, DenseOperator,
        DiagonalOperator, GeometricDecaySpec,
    };
    use crate::sketch::{block_krylov_basis, gaussian_matrix};

    fn manual_result(t: DMatrix<f64>) -> CompressionResult {
        let m = t.nrows();
        CompressionResult {
            q_basis: DMatrix::zeros(0, 0),
            t,
            m,
            deflated: false,
        }
    }

    #[test]
    fn estimate_zero_compression() {
        let rec = estimate_from_compression(
            &manual_result(DMatrix::zeros(2, 2)),
            &SketchConfig::new(1, 1, 1, 0),
            Algorithm::Krylov,
        )
        .unwrap();
        assert_eq!(rec.trace_estimate, 0.0);
        assert_eq!(rec.logdet_estimate, 0.0);
    }

    #[test]
    fn estimate_diagonal_compression() {
        let t = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let rec = estimate_from_compression(
            &manual_result(t),
            &SketchConfig::new(1, 1, 1, 0),
            Algorithm::Krylov,
        )
        .unwrap();
        assert!((rec.trace_estimate - 4.0).abs() < 1e-14);
        assert!((rec.logdet_estimate - 8.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn full_space_estimate_matches_exact() {
        let x = gaussian_matrix(40, 30, 3).unwrap();
        let (op, model) = dense_operator_with_model(x.tr_mul(&x)).unwrap();
        let cfg = SketchConfig::new(5, 5, 3, 0);
        let omega = gaussian_matrix(30, 10, 4).unwrap();
        let comp = block_krylov_basis(&op, &omega, &cfg).unwrap();
        let rec = estimate_from_compression(&comp, &cfg, Algorithm::Krylov).unwrap();
        let (dt, dl) =
            relative_errors(model.exact_trace(), model.exact_logdet_shifted(), &rec).unwrap();
        assert!(dt.abs() <= 1e-9);
        assert!(dl.abs() <= 1e-9);
    }

    #[test]
    fn hutchinson_identity_is_exact() {
        let op = DiagonalOperator::new(vec![1.0; 17]);
        for n_samples in [1, 3, 100] {
            let est = hutchinson_trace(&op, n_samples, 5).unwrap();
            assert_eq!(est, 17.0);
        }
    }

    #[test]
    fn hutchinson_diagonal_concentrates() {
        let op = DiagonalOperator::new(vec![2.0, 0.0]);
        let est = hutchinson_trace(&op, 10_000, 11).unwrap();
        assert!((est - 2.0).abs() <= 0.1);
    }

    #[test]
    fn hutchinson_single_sample_deterministic() {
        let op = DiagonalOperator::new(vec![3.0, 1.0, 0.5]);
        let a = hutchinson_trace(&op, 1, 1234).unwrap();
        let b = hutchinson_trace(&op, 1, 1234).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hutchinson_independent_of_batching() {
        // The per-sample seed schedule makes the estimate a fixed-order
        // sum; accumulating samples one at a time gives the same result.
        let x = gaussian_matrix(10, 6, 51).unwrap();
        let op = DenseOperator::new(x.tr_mul(&x)).unwrap();
        let n_samples = 150; // spans several internal batches
        let seed = 99;
        let whole = hutchinson_trace(&op, n_samples, seed).unwrap();
        let mut total = 0.0;
        for i in 0..n_samples {
            total += hutchinson_trace(&op, 1, seed + i as u64).unwrap();
        }
        assert_eq!(whole, total / n_samples as f64);
    }

    #[test]
    fn hutchinson_unbiased_within_standard_error() {
        // Non-diagonal A so the estimator has real variance.
        let x = gaussian_matrix(12, 8, 21).unwrap();
        let a = x.tr_mul(&x);
        let op = DenseOperator::new(a.clone()).unwrap();
        let exact = a.trace();
        let n_samples = 10_000;
        let est = hutchinson_trace(&op, n_samples, 77).unwrap();
        // Var(c'Ac) = 2 * (|A|_F^2 - sum of squared diagonal entries)
        let fro2 = a.norm_squared();
        let diag2: f64 = (0..8).map(|i| a[(i, i)] * a[(i, i)]).sum();
        let se = (2.0 * (fro2 - diag2) / n_samples as f64).sqrt();
        assert!(
            (est - exact).abs() <= 5.0 * se,
            "estimate {est}, exact {exact}, se {se}"
        );
    }

    #[test]
    fn relative_error_basics() {
        let rec = EstimateRecord {
            trace_estimate: 9.0,
            logdet_estimate: 5.0,
            config: SketchConfig::new(1, 1, 1, 0),
            algorithm: Algorithm::Krylov,
            m_effective: 1,
            deflated: false,
        };
        let (dt, dl) = relative_errors(10.0, 5.0, &rec).unwrap();
        assert!((dt - 0.1).abs() < 1e-15);
        assert_eq!(dl, 0.0);
        assert!(relative_errors(0.0, 5.0, &rec).is_err());
        assert!(relative_errors(10.0, 0.0, &rec).is_err());
    }

    #[test]
    fn relative_errors_bounded_for_psd_inputs() {
        for trial in 0..10 {
            let (op, model) = make_diagonal_operator(&GeometricDecaySpec {
                n: 40,
                lambda1: 50.0,
                tau: 0.7,
            })
            .unwrap();
            let cfg = SketchConfig::new(3, 2, 1 + trial % 3, 0);
            let omega = gaussian_matrix(40, 5, 600 + trial as u64).unwrap();
            let comp = block_krylov_basis(&op, &omega, &cfg).unwrap();
            let rec = estimate_from_compression(&comp, &cfg, Algorithm::Krylov).unwrap();
            let (dt, dl) =
                relative_errors(model.exact_trace(), model.exact_logdet_shifted(), &rec).unwrap();
            assert!((-1e-9..=1.0).contains(&dt));
            assert!((-1e-9..=1.0).contains(&dl));
        }
    }

    #[test]
    fn estimates_invariant_under_basis_rotation() {
        let x = gaussian_matrix(30, 20, 31).unwrap();
        let op = DenseOperator::new(x.tr_mul(&x)).unwrap();
        let cfg = SketchConfig::new(4, 2, 2, 0);
        let omega = gaussian_matrix(20, 6, 32).unwrap();
        let comp = block_krylov_basis(&op, &omega, &cfg).unwrap();
        let rec = estimate_from_compression(&comp, &cfg, Algorithm::Krylov).unwrap();

        // Rotate the basis by a random orthogonal W and recompress.
        let w = gaussian_matrix(comp.m, comp.m, 33).unwrap().qr().q();
        let rotated = &comp.q_basis * &w;
        let t2 = la::symmetrize(&rotated.tr_mul(&op.apply(&rotated)));
        let rec2 = estimate_from_compression(
            &manual_result(t2),
            &cfg,
            Algorithm::Krylov,
        )
        .unwrap();
        assert!(
            (rec.trace_estimate - rec2.trace_estimate).abs()
                <= 1e-10 * rec.trace_estimate.abs().max(1.0)
        );
        assert!(
            (rec.logdet_estimate - rec2.logdet_estimate).abs()
                <= 1e-10 * rec.logdet_estimate.abs().max(1.0)
        );
    }

    #[test]
    fn split_identity_basis_takes_leading_rows() {
        let (_, model) = make_diagonal_operator(&GeometricDecaySpec {
            n: 6,
            lambda1: 10.0,
            tau: 0.5,
        })
        .unwrap();
        let mut omega = DMatrix::<f64>::zeros(6, 3);
        for i in 0..3 {
            omega[(i, i)] = 1.0;
        }
        let split = spectral_split(&model, &omega, 3).unwrap();
        assert!((split.omega1 - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
        assert_eq!(split.omega2.amax(), 0.0);

        let omega = gaussian_matrix(6, 3, 8).unwrap();
        let split = spectral_split(&model, &omega, 2).unwrap();
        assert_eq!(split.omega1, omega.rows(0, 2).into_owned());
    }

    #[test]
    fn split_reconstructs_rotated_probe() {
        let n = 50;
        let u = gaussian_matrix(n, n, 71).unwrap().qr().q();
        let eigenvalues: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        let model = crate::linop::SpectralModel::new(
            eigenvalues,
            Some(EigenBasis::Dense(u.clone())),
        )
        .unwrap();
        let omega = gaussian_matrix(n, 10, 72).unwrap();
        let split = spectral_split(&model, &omega, 4).unwrap();
        let mut stacked = DMatrix::<f64>::zeros(n, 10);
        stacked.rows_mut(0, 4).copy_from(&split.omega1);
        stacked.rows_mut(4, n - 4).copy_from(&split.omega2);
        assert!((stacked - u.tr_mul(&omega)).amax() <= 1e-12);
    }

    #[test]
    fn interaction_norm_zero_tail() {
        let split = SpectralSplit {
            omega1: gaussian_matrix(4, 4, 81).unwrap(),
            omega2: DMatrix::zeros(10, 4),
            k: 4,
        };
        assert!(interaction_norm(&split).unwrap() <= 1e-12);
    }

    #[test]
    fn interaction_norm_identity_head() {
        let omega2 = gaussian_matrix(10, 3, 82).unwrap();
        let split = SpectralSplit {
            omega1: DMatrix::identity(3, 3),
            omega2: omega2.clone(),
            k: 3,
        };
        let w = interaction_norm(&split).unwrap();
        assert!((w - la::spectral_norm(&omega2)).abs() <= 1e-12 * w.max(1.0));
    }

    #[test]
    fn interaction_norm_matches_svd_oracle() {
        let n = 200;
        let (k, l) = (10, 20);
        let omega = gaussian_matrix(n, l, 83).unwrap();
        let omega1 = omega.rows(0, k).into_owned();
        let omega2 = omega.rows(k, n - k).into_owned();
        let split = SpectralSplit {
            omega1: omega1.clone(),
            omega2: omega2.clone(),
            k,
        };
        let w = interaction_norm(&split).unwrap();

        // Oracle: explicit pseudo-inverse through nalgebra's SVD.
        let pinv = omega1.svd(true, true).pseudo_inverse(1e-12).unwrap();
        let oracle = (omega2 * pinv).svd(false, false).singular_values[0];
        assert!((w - oracle).abs() <= 1e-8 * oracle);
    }

    #[test]
    fn split_detects_rank_deficiency() {
        let (_, model) = make_diagonal_operator(&GeometricDecaySpec {
            n: 8,
            lambda1: 10.0,
            tau: 0.5,
        })
        .unwrap();
        // First two rows identical -> Omega_hat_1 rank 1 < k = 2.
        let mut omega = gaussian_matrix(8, 3, 84).unwrap();
        for c in 0..3 {
            let v = omega[(0, c)];
            omega[(1, c)] = v;
        }
        assert!(matches!(
            spectral_split(&model, &omega, 2),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn dense_dominance_holds_on_random_operators() {
        // Krylov at the same probe never loses to subspace iteration.
        for trial in 0..5 {
            let op = {
                let x = gaussian_matrix(36, 30, 900 + trial).unwrap();
                DenseOperator::new(x.tr_mul(&x)).unwrap()
            };
            let exact = assemble_dense(&op).trace();
            let cfg = SketchConfig::new(4, 2, 3, 0);
            let omega = gaussian_matrix(30, 6, 910 + trial).unwrap();
            let kr = block_krylov_basis(&op, &omega, &cfg).unwrap();
            let sub = crate::sketch::subspace_iteration_basis(&op, &omega, &cfg).unwrap();
            assert!(kr.trace() >= sub.trace() - 1e-9 * exact);
        }
    }
}
