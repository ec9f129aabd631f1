//! Dense linear-algebra kernels with explicit accuracy contracts.
//!
//! Everything here operates at "desk scale" (compressions of a few hundred
//! columns, Gram matrices of the probe split), not at the operator order
//! `n`. The factorizations are backed by nalgebra; the shifted-Cholesky
//! log-determinant is hand-rolled so the pivot tolerance stays under our
//! control.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Thin QR factorization `M = Q R` of a tall matrix.
pub struct ThinQr {
    /// `n x m` with orthonormal columns.
    pub q: DMatrix<f64>,
    /// `m x m` upper triangular.
    pub r: DMatrix<f64>,
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, in the same order as `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

/// Thin QR of an `n x m` matrix with `n >= m`.
///
/// Rank deficiency is not resolved here: dependent columns surface as
/// near-zero diagonal entries of `R` and the caller decides what to do.
pub fn thin_qr(m: &DMatrix<f64>) -> Result<ThinQr> {
    if m.nrows() < m.ncols() {
        return Err(Error::Shape(format!(
            "thin_qr expects n >= m, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let qr = m.clone().qr();
    Ok(ThinQr {
        q: qr.q(),
        r: qr.r(),
    })
}

/// Eigendecomposition of a symmetric `m x m` matrix.
///
/// The input must satisfy `|S - S'|_max <= 1e-8 * |S|_max`; it is then
/// symmetrized before solving so roundoff-level asymmetry cannot leak into
/// the eigenvectors.
pub fn sym_eig(s: &DMatrix<f64>) -> Result<SymEig> {
    if s.nrows() != s.ncols() {
        return Err(Error::Shape(format!(
            "sym_eig expects a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let scale = s.amax();
    let asym = (s - s.transpose()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::NotSymmetric(format!(
            "|S - S'|_max = {asym:.3e} exceeds 1e-8 * |S|_max = {:.3e}",
            1e-8 * scale
        )));
    }
    let sym = symmetrize(s);
    let eig = sym.symmetric_eigen();
    // nalgebra returns eigenvalues unsorted; order ascending.
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(s.nrows(), s.ncols(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// `log det(I + T)` of a symmetric PSD matrix via Cholesky of `I + T`.
///
/// `T` is symmetrized first; `Q' A Q` compressions accumulate asymmetry at
/// roundoff level. A non-positive pivot means some eigenvalue of `T` is at
/// or below -1, which a PSD input cannot produce, and is reported as such.
pub fn logdet_shifted_cholesky(t: &DMatrix<f64>) -> Result<f64> {
    if t.nrows() != t.ncols() {
        return Err(Error::Shape(format!(
            "logdet_shifted_cholesky expects a square matrix, got {}x{}",
            t.nrows(),
            t.ncols()
        )));
    }
    let m = t.nrows();
    if m == 0 {
        return Ok(0.0);
    }
    let mut a = symmetrize(t);
    for j in 0..m {
        a[(j, j)] += 1.0;
    }
    let n = m;
    let data = a.as_mut_slice(); // column-major
    let mut logdet = 0.0;
    let pivot_floor = 1e-10;
    for j in 0..n {
        // Left-looking update of column j.
        for k in 0..j {
            let ljk = data[k * n + j];
            for i in j..n {
                data[j * n + i] -= data[k * n + i] * ljk;
            }
        }
        let d = data[j * n + j];
        if d <= pivot_floor {
            return Err(Error::NotPsd(format!(
                "Cholesky pivot {d:.3e} at index {j}; input is not PSD"
            )));
        }
        let r = d.sqrt();
        logdet += 2.0 * r.ln();
        let inv = 1.0 / r;
        for i in j..n {
            data[j * n + i] *= inv;
        }
    }
    Ok(logdet)
}

/// Largest singular value of an `a x b` matrix.
///
/// Computed from the eigensolve of the smaller of the two Gram matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() >= m.ncols() {
        m.tr_mul(m)
    } else {
        m * m.transpose()
    };
    let eig = symmetrize(&gram).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, &v| acc.max(v));
    lmax.sqrt()
}

/// `B * pinv(Ahat1)` for a `k x l` full-row-rank matrix `Ahat1` (`k <= l`)
/// and an `m x l` matrix `B`.
///
/// The pseudo-inverse goes through the `k x k` Gram matrix with a singular
/// value cutoff of `1e-12 * sigma_max`; falling below that is reported as
/// rank deficiency rather than silently regularized.
pub fn pinv_times(ahat1: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (k, l) = (ahat1.nrows(), ahat1.ncols());
    if k > l {
        return Err(Error::Shape(format!(
            "pinv_times expects k <= l, got {k}x{l}"
        )));
    }
    if b.ncols() != l {
        return Err(Error::Shape(format!(
            "pinv_times: B has {} columns, expected {l}",
            b.ncols()
        )));
    }
    let gram = ahat1 * ahat1.transpose(); // k x k
    let eig = sym_eig(&gram)?;
    let lmax = eig.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let smax = lmax.sqrt();
    let smin = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    if smax == 0.0 || smin < 1e-12 * smax {
        return Err(Error::RankDeficient(format!(
            "pinv_times: sigma_min = {smin:.3e} < 1e-12 * sigma_max = {:.3e}",
            1e-12 * smax
        )));
    }
    // B * A' * V * diag(1/lambda) * V'
    let w = b * ahat1.transpose(); // m x k
    let wv = w * &eig.eigenvectors;
    let scaled = DMatrix::from_fn(wv.nrows(), k, |r, c| wv[(r, c)] / eig.eigenvalues[c]);
    Ok(scaled * eig.eigenvectors.transpose())
}

/// `(M + M') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}
