//! Gaussian probes and orthonormal basis construction.
//!
//! Two ways to build the compression subspace from a probe `Omega`:
//! subspace iteration uses only `range(A^q * Omega)`, the block Krylov
//! variant keeps every intermediate block `A * Omega, ..., A^q * Omega`.
//! Both come in an `Idealized` form that mirrors the written algorithm
//! (all products first, one QR at the end) and a `Stabilized` form that
//! interleaves orthonormalization with the products; the idealized block
//! Krylov iteration is numerically unstable on decaying spectra, so
//! stabilized is the default.

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gemm;
use crate::la;
use crate::linop::HermitianOperator;

/// Per-column deflation tolerance, relative to the pre-orthogonalization
/// column-norm scale of the block being added.
pub const DEFLATION_RTOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stabilization {
    /// Products first, a single QR at the end; faithful to the written
    /// algorithm but unstable for larger `q`.
    Idealized,
    /// Interleave orthonormalization with the products (block
    /// Gram-Schmidt against the accumulated basis, reorthogonalized
    /// twice, then a column-pivoted QR of the remainder).
    #[default]
    Stabilized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RankPolicy {
    /// Rank collapse aborts the run.
    Error,
    /// Numerically dependent columns are dropped and reported.
    #[default]
    Deflate,
}

/// Parameters of one estimator run.
#[derive(Clone, Copy, Debug)]
pub struct SketchConfig {
    /// Target rank (location of the presumed eigenvalue gap).
    pub k: usize,
    /// Oversampling; the probe has `l = k + p` columns.
    pub p: usize,
    /// Iteration / Krylov depth.
    pub q: usize,
    pub seed: u64,
    pub stabilization: Stabilization,
    pub rank_policy: RankPolicy,
}

impl SketchConfig {
    pub fn new(k: usize, p: usize, q: usize, seed: u64) -> Self {
        Self {
            k,
            p,
            q,
            seed,
            stabilization: Stabilization::default(),
            rank_policy: RankPolicy::default(),
        }
    }

    /// Probe width `l = k + p`.
    pub fn l(&self) -> usize {
        self.k + self.p
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidParameter("target rank k must be >= 1".into()));
        }
        if self.q < 1 {
            return Err(Error::InvalidParameter("depth q must be >= 1".into()));
        }
        if self.l() > n {
            return Err(Error::InvalidParameter(format!(
                "probe width l = k + p = {} exceeds operator order {n}",
                self.l()
            )));
        }
        Ok(())
    }
}

/// Orthonormal basis `Q` and compression `T = Q' A Q`.
pub struct CompressionResult {
    /// `n x m` with orthonormal columns.
    pub q_basis: DMatrix<f64>,
    /// `m x m`, symmetrized.
    pub t: DMatrix<f64>,
    /// Effective dimension (`q*l` for the Krylov path at full rank, `l`
    /// for subspace iteration).
    pub m: usize,
    /// Whether any numerically dependent columns were dropped.
    pub deflated: bool,
}

impl CompressionResult {
    pub fn trace(&self) -> f64 {
        self.t.trace()
    }
}

#[inline]
fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    // 53 uniform bits in [0, 1).
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Standard normal via the Marsaglia polar transform: only `sqrt`/`ln`,
/// so draws are stable across platforms for a fixed seed.
fn next_normal(rng: &mut ChaCha8Rng, spare: &mut Option<f64>) -> f64 {
    if let Some(z) = spare.take() {
        return z;
    }
    loop {
        let u = 2.0 * unit_f64(rng) - 1.0;
        let v = 2.0 * unit_f64(rng) - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            let f = (-2.0 * s.ln() / s).sqrt();
            *spare = Some(v * f);
            return u * f;
        }
    }
}

/// `n x l` matrix of i.i.d. standard normals, deterministic in `seed`.
pub fn gaussian_matrix(n: usize, l: usize, seed: u64) -> Result<DMatrix<f64>> {
    if l < 1 {
        return Err(Error::InvalidParameter("probe width must be >= 1".into()));
    }
    if l > n {
        return Err(Error::InvalidParameter(format!(
            "probe width {l} exceeds operator order {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spare = None;
    let mut out = DMatrix::<f64>::zeros(n, l);
    for v in out.as_mut_slice().iter_mut() {
        *v = next_normal(&mut rng, &mut spare);
    }
    Ok(out)
}

/// Basis accumulated column-block by column-block.
struct GrowingBasis {
    store: DMatrix<f64>,
    filled: usize,
}

impl GrowingBasis {
    fn with_capacity(n: usize, capacity: usize) -> Self {
        Self {
            store: DMatrix::zeros(n, capacity),
            filled: 0,
        }
    }

    /// Filled columns as one contiguous column-major slice.
    fn slice(&self) -> &[f64] {
        &self.store.as_slice()[..self.filled * self.store.nrows()]
    }

    fn append(&mut self, block: &DMatrix<f64>) {
        let c = block.ncols();
        self.store
            .columns_mut(self.filled, c)
            .copy_from(block);
        self.filled += c;
    }

    fn into_matrix(self) -> DMatrix<f64> {
        let filled = self.filled;
        let mut store = self.store;
        store.resize_horizontally_mut(filled, 0.0);
        store
    }
}

fn max_column_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols()).fold(0.0f64, |acc, c| acc.max(m.column(c).norm()))
}

/// Orthonormalize `block`, keeping only columns whose triangular pivot
/// exceeds `tol`. Returns the kept orthonormal columns and the number
/// dropped.
///
/// Fast path is a plain Householder QR; the column-pivoted factorization
/// only runs when some pivot falls below the tolerance.
fn orthonormal_columns(block: DMatrix<f64>, tol: f64) -> (DMatrix<f64>, usize) {
    let cols = block.ncols();
    if cols == 0 {
        return (block, 0);
    }
    let plain = block.clone().qr();
    let r = plain.r();
    let full_rank = (0..cols.min(r.nrows())).all(|i| r[(i, i)].abs() > tol);
    if full_rank && r.nrows() >= cols {
        return (plain.q(), 0);
    }
    let qr = block.col_piv_qr();
    let r = qr.r();
    let q = qr.q();
    let mut kept = 0;
    for i in 0..r.nrows().min(cols) {
        if r[(i, i)].abs() > tol {
            kept += 1;
        } else {
            break; // pivots are nonincreasing in magnitude
        }
    }
    let dropped = cols - kept;
    (q.columns(0, kept).into_owned(), dropped)
}

/// Remove components of `block` along an orthonormal basis given as an
/// `n x mb` column-major slice, reorthogonalizing twice.
fn project_out(block: &mut DMatrix<f64>, basis: &[f64], n: usize, mb: usize) {
    if mb == 0 {
        return;
    }
    for _ in 0..2 {
        let coeff = gemm::at_b(basis, block.as_slice(), n, mb, block.ncols());
        gemm::sub_mul(block, basis, n, mb, &coeff);
    }
}

fn compress_onto(a: &dyn HermitianOperator, q_basis: &DMatrix<f64>) -> DMatrix<f64> {
    if q_basis.ncols() == 0 {
        return DMatrix::zeros(0, 0);
    }
    let aq = a.apply(q_basis);
    let n = q_basis.nrows();
    let m = q_basis.ncols();
    la::symmetrize(&gemm::at_b(q_basis.as_slice(), aq.as_slice(), n, m, m))
}

fn handle_drop(dropped: usize, policy: RankPolicy, context: &str) -> Result<()> {
    if dropped > 0 && policy == RankPolicy::Error {
        return Err(Error::RankDeficient(format!(
            "{context}: {dropped} numerically dependent column(s)"
        )));
    }
    Ok(())
}

/// Randomized subspace iteration: orthonormal basis of `range(A^q * Omega)`
/// and the compression onto it.
pub fn subspace_iteration_basis(
    a: &dyn HermitianOperator,
    omega: &DMatrix<f64>,
    cfg: &SketchConfig,
) -> Result<CompressionResult> {
    if cfg.q < 1 {
        return Err(Error::InvalidParameter("depth q must be >= 1".into()));
    }
    if omega.nrows() != a.dim() {
        return Err(Error::Shape(format!(
            "probe has {} rows, operator order is {}",
            omega.nrows(),
            a.dim()
        )));
    }
    let mut deflated = false;
    let q_basis = match cfg.stabilization {
        Stabilization::Idealized => {
            let mut y = omega.clone();
            for _ in 0..cfg.q {
                y = a.apply(&y);
            }
            let tol = DEFLATION_RTOL * max_column_norm(&y);
            let (q, dropped) = orthonormal_columns(y, tol);
            handle_drop(dropped, cfg.rank_policy, "subspace iteration")?;
            deflated = dropped > 0;
            q
        }
        Stabilization::Stabilized => {
            let mut cur = omega.clone();
            for _ in 0..cfg.q {
                let w = a.apply(&cur);
                let tol = DEFLATION_RTOL * max_column_norm(&w);
                let (q, dropped) = orthonormal_columns(w, tol);
                handle_drop(dropped, cfg.rank_policy, "subspace iteration")?;
                deflated |= dropped > 0;
                cur = q;
                if cur.ncols() == 0 {
                    break;
                }
            }
            cur
        }
    };
    let t = compress_onto(a, &q_basis);
    Ok(CompressionResult {
        m: q_basis.ncols(),
        q_basis,
        t,
        deflated,
    })
}

/// Randomized block Krylov basis: orthonormal basis of
/// `range(A*Omega, A^2*Omega, ..., A^q*Omega)` and the compression onto it.
pub fn block_krylov_basis(
    a: &dyn HermitianOperator,
    omega: &DMatrix<f64>,
    cfg: &SketchConfig,
) -> Result<CompressionResult> {
    if cfg.q < 1 {
        return Err(Error::InvalidParameter("depth q must be >= 1".into()));
    }
    if omega.nrows() != a.dim() {
        return Err(Error::Shape(format!(
            "probe has {} rows, operator order is {}",
            omega.nrows(),
            a.dim()
        )));
    }
    let n = a.dim();
    let l = omega.ncols();
    let mut deflated = false;
    let q_basis = match cfg.stabilization {
        Stabilization::Idealized => {
            let mut krylov = DMatrix::<f64>::zeros(n, cfg.q * l);
            let mut cur = omega.clone();
            for step in 0..cfg.q {
                cur = a.apply(&cur);
                krylov.columns_mut(step * l, l).copy_from(&cur);
            }
            let tol = DEFLATION_RTOL * max_column_norm(&krylov);
            let (q, dropped) = orthonormal_columns(krylov, tol);
            // A wide collected block can exceed the order; only genuine
            // rank loss within min(n, q*l) counts as deflation.
            let expected = (cfg.q * l).min(n);
            let dropped = dropped.saturating_sub(cfg.q * l - expected);
            handle_drop(dropped, cfg.rank_policy, "block Krylov")?;
            deflated = dropped > 0;
            q
        }
        Stabilization::Stabilized => {
            let mut basis = GrowingBasis::with_capacity(n, (cfg.q * l).min(n));
            let mut prev = omega.clone();
            for _step in 0..cfg.q {
                let mut w = a.apply(&prev);
                let tol = DEFLATION_RTOL * max_column_norm(&w);
                project_out(&mut w, basis.slice(), n, basis.filled);
                let room = basis.store.ncols() - basis.filled;
                let (kept, mut dropped) = orthonormal_columns(w, tol);
                let kept = if kept.ncols() > room {
                    dropped += kept.ncols() - room;
                    kept.columns(0, room).into_owned()
                } else {
                    kept
                };
                handle_drop(dropped, cfg.rank_policy, "block Krylov")?;
                deflated |= dropped > 0;
                if kept.ncols() == 0 {
                    break; // Krylov space exhausted
                }
                basis.append(&kept);
                prev = kept;
            }
            basis.into_matrix()
        }
    };
    let t = compress_onto(a, &q_basis);
    Ok(CompressionResult {
        m: q_basis.ncols(),
        q_basis,
        t,
        deflated,
    })
}
