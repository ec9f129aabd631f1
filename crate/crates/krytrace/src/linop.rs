//! Matrix-free Hermitian PSD operators and the two built-in test families.
//!
//! Operators expose only their order and a block product `Y = A * X`; the
//! estimators never see entries. Each built-in family also produces a
//! [`SpectralModel`] holding the exact spectrum (and, when cheap, the
//! eigenbasis) so experiments can report true errors and evaluate bounds.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::la;

/// Matrix-free Hermitian positive semi-definite operator.
///
/// Implementations are immutable after construction; `apply` may be called
/// concurrently from multiple threads.
pub trait HermitianOperator: Send + Sync {
    /// Order `n` of the operator.
    fn dim(&self) -> usize;
    /// Block product `Y = A * X` for an `n x s` block `X`.
    fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64>;
}

/// Known eigenbasis of a test operator.
#[derive(Clone, Debug)]
pub enum EigenBasis {
    /// The operator is diagonal in the standard basis.
    Identity,
    /// Explicit `n x n` orthonormal matrix, columns ordered like the
    /// eigenvalues.
    Dense(DMatrix<f64>),
}

/// Exact spectral data of a test operator: eigenvalues sorted nonincreasing
/// (all nonnegative) and optionally the eigenbasis.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    eigenvalues: Vec<f64>,
    basis: Option<EigenBasis>,
}

impl SpectralModel {
    pub fn new(eigenvalues: Vec<f64>, basis: Option<EigenBasis>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidParameter("empty eigenvalue list".into()));
        }
        for w in eigenvalues.windows(2) {
            if !(w[1] <= w[0]) {
                return Err(Error::InvalidParameter(
                    "eigenvalues must be sorted nonincreasing".into(),
                ));
            }
        }
        if eigenvalues.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "eigenvalues must be finite and nonnegative".into(),
            ));
        }
        if let Some(EigenBasis::Dense(u)) = &basis {
            if u.nrows() != eigenvalues.len() || u.ncols() != eigenvalues.len() {
                return Err(Error::Shape(format!(
                    "eigenbasis is {}x{}, expected order {}",
                    u.nrows(),
                    u.ncols(),
                    eigenvalues.len()
                )));
            }
        }
        Ok(Self { eigenvalues, basis })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues sorted nonincreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> Option<&EigenBasis> {
        self.basis.as_ref()
    }

    /// `Tr(A) = sum of eigenvalues`.
    pub fn exact_trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `log det(I + A) = sum of log(1 + eigenvalue)`.
    pub fn exact_logdet_shifted(&self) -> f64 {
        self.eigenvalues.iter().map(|&v| v.ln_1p()).sum()
    }

    /// Trace of the tail `Lambda_2` past the split index `k`.
    pub fn tail_trace(&self, k: usize) -> f64 {
        self.eigenvalues[k.min(self.dim())..].iter().sum()
    }

    /// `log det(I + Lambda_2)` of the tail past the split index `k`.
    pub fn tail_logdet(&self, k: usize) -> f64 {
        self.eigenvalues[k.min(self.dim())..]
            .iter()
            .map(|&v| v.ln_1p())
            .sum()
    }
}

/// Geometric eigenvalue decay family: `lambda_{j+1} = tau^j * lambda_1`.
#[derive(Clone, Copy, Debug)]
pub struct GeometricDecaySpec {
    pub n: usize,
    pub lambda1: f64,
    pub tau: f64,
}

/// Sparse low-rank family: `A = sum_j c_j x_j x_j'` with `c_j = h/j^2` for
/// the first `r_high` terms and `l_coef/j^2` afterwards; the `x_j` are
/// sparse vectors with nonnegative entries.
#[derive(Clone, Copy, Debug)]
pub struct SparseLowRankSpec {
    pub n: usize,
    pub high_coef: f64,
    pub low_coef: f64,
    /// Fraction of nonzero entries in each `x_j`.
    pub density: f64,
    pub r_high: usize,
    pub r_total: usize,
    pub seed: u64,
}

impl SparseLowRankSpec {
    /// The benchmark configuration: order 20000, density 0.025, rank split
    /// 40/300.
    pub fn benchmark_defaults(high_coef: f64, low_coef: f64, seed: u64) -> Self {
        Self {
            n: 20000,
            high_coef,
            low_coef,
            density: 0.025,
            r_high: 40,
            r_total: 300,
            seed,
        }
    }
}

/// Diagonal operator; `apply` scales rows by the eigenvalues.
pub struct DiagonalOperator {
    eigenvalues: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(eigenvalues: Vec<f64>) -> Self {
        Self { eigenvalues }
    }
}

impl HermitianOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        assert_eq!(block.nrows(), n, "block has wrong row count");
        let mut out = block.clone();
        for c in 0..block.ncols() {
            let col = &mut out.as_mut_slice()[c * n..(c + 1) * n];
            for (v, lam) in col.iter_mut().zip(&self.eigenvalues) {
                *v *= lam;
            }
        }
        out
    }
}

/// One sparse column `x_j`: sorted indices plus values.
#[derive(Clone, Debug)]
pub struct SparseColumn {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseColumn {
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Factored sparse operator `A = X C X'` with `X` holding sparse columns
/// and `C` a nonnegative diagonal. `apply` costs `O(nnz(X) * s)` per block
/// of `s` columns.
pub struct FactoredSparseOperator {
    n: usize,
    columns: Vec<SparseColumn>,
    coeffs: Vec<f64>,
}

impl FactoredSparseOperator {
    pub fn new(n: usize, columns: Vec<SparseColumn>, coeffs: Vec<f64>) -> Result<Self> {
        if columns.len() != coeffs.len() {
            return Err(Error::Shape(format!(
                "{} columns but {} coefficients",
                columns.len(),
                coeffs.len()
            )));
        }
        if columns.len() > n {
            return Err(Error::InvalidParameter(format!(
                "rank {} exceeds order {n}",
                columns.len()
            )));
        }
        if coeffs.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "coefficients must be finite and nonnegative for a PSD operator".into(),
            ));
        }
        for col in &columns {
            if col.indices.len() != col.values.len() {
                return Err(Error::Shape("sparse column index/value mismatch".into()));
            }
            if col.indices.iter().any(|&i| i >= n) {
                return Err(Error::Shape("sparse column index out of range".into()));
            }
        }
        Ok(Self { n, columns, coeffs })
    }

    pub fn rank_bound(&self) -> usize {
        self.columns.len()
    }

    /// `Tr(A) = sum_j c_j |x_j|^2`, evaluated directly on the factors.
    pub fn trace_direct(&self) -> f64 {
        self.columns
            .iter()
            .zip(&self.coeffs)
            .map(|(col, c)| c * col.norm_sq())
            .sum()
    }

    /// The `r x r` matrix `C^{1/2} X' X C^{1/2}` whose eigenvalues are the
    /// nonzero eigenvalues of `A`.
    pub fn scaled_gram(&self) -> DMatrix<f64> {
        let r = self.columns.len();
        let mut gram = DMatrix::<f64>::zeros(r, r);
        let mut dense = vec![0.0f64; self.n];
        for i in 0..r {
            let ci = &self.columns[i];
            for (idx, v) in ci.indices.iter().zip(&ci.values) {
                dense[*idx] = *v;
            }
            for j in i..r {
                let cj = &self.columns[j];
                let dot: f64 = cj
                    .indices
                    .iter()
                    .zip(&cj.values)
                    .map(|(idx, v)| dense[*idx] * v)
                    .sum();
                let scaled = dot * (self.coeffs[i] * self.coeffs[j]).sqrt();
                gram[(i, j)] = scaled;
                gram[(j, i)] = scaled;
            }
            for idx in &ci.indices {
                dense[*idx] = 0.0;
            }
        }
        gram
    }

    /// Exact spectral model from the scaled Gram eigenproblem; eigenvalues
    /// past the rank are exactly zero. No `n x n` dense work is involved.
    pub fn spectral_model(&self) -> Result<SpectralModel> {
        let gram = self.scaled_gram();
        let mut eigs = if gram.nrows() > 0 {
            la::sym_eig(&gram)?.eigenvalues
        } else {
            Vec::new()
        };
        eigs.reverse();
        let lmax = eigs.first().copied().unwrap_or(0.0).max(0.0);
        let floor = -1e-10 * lmax.max(1.0);
        let mut eigenvalues = Vec::with_capacity(self.n);
        for v in eigs {
            if v < floor {
                return Err(Error::NotPsd(format!(
                    "factored Gram eigenvalue {v:.3e} is negative beyond roundoff"
                )));
            }
            eigenvalues.push(v.max(0.0));
        }
        eigenvalues.resize(self.n, 0.0);
        SpectralModel::new(eigenvalues, None)
    }
}

impl HermitianOperator for FactoredSparseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        assert_eq!(block.nrows(), n, "block has wrong row count");
        let s = block.ncols();
        let mut out = DMatrix::<f64>::zeros(n, s);
        let x = block.as_slice();
        let y = out.as_mut_slice();
        for (col, &c) in self.columns.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            for b in 0..s {
                let xcol = &x[b * n..(b + 1) * n];
                let mut dot = 0.0;
                for (idx, v) in col.indices.iter().zip(&col.values) {
                    dot += xcol[*idx] * v;
                }
                let scaled = c * dot;
                let ycol = &mut y[b * n..(b + 1) * n];
                for (idx, v) in col.indices.iter().zip(&col.values) {
                    ycol[*idx] += scaled * v;
                }
            }
        }
        out
    }
}

/// Dense operator for imported matrices and tests.
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Shape(format!(
                "dense operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl HermitianOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * block
    }
}

/// Build the geometric-decay diagonal operator together with its exact
/// spectral model (eigenbasis is the identity).
pub fn make_diagonal_operator(
    spec: &GeometricDecaySpec,
) -> Result<(DiagonalOperator, SpectralModel)> {
    if spec.n < 1 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    if !(spec.tau > 0.0 && spec.tau < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "decay ratio tau must lie in (0,1), got {}",
            spec.tau
        )));
    }
    if !(spec.lambda1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "leading eigenvalue must be positive, got {}",
            spec.lambda1
        )));
    }
    let eigenvalues: Vec<f64> = (0..spec.n)
        .map(|j| spec.lambda1 * spec.tau.powi(j as i32))
        .collect();
    let model = SpectralModel::new(eigenvalues.clone(), Some(EigenBasis::Identity))?;
    Ok((DiagonalOperator::new(eigenvalues), model))
}

/// Draw one sparse column: `ceil(density * n)` distinct positions chosen
/// uniformly, values uniform on (0,1). All-zero draws are redrawn.
fn draw_sparse_column(n: usize, nnz: usize, rng: &mut ChaCha8Rng) -> SparseColumn {
    loop {
        let mut indices = rand::seq::index::sample(rng, n, nnz).into_vec();
        indices.sort_unstable();
        let values: Vec<f64> = (0..nnz).map(|_| rng.gen::<f64>()).collect();
        if values.iter().any(|&v| v > 0.0) {
            return SparseColumn { indices, values };
        }
    }
}

/// Build the sparse low-rank operator and its exact spectral model.
pub fn make_sparse_lowrank_operator(
    spec: &SparseLowRankSpec,
) -> Result<(FactoredSparseOperator, SpectralModel)> {
    if spec.r_total > spec.n {
        return Err(Error::InvalidParameter(format!(
            "rank {} exceeds order {}",
            spec.r_total, spec.n
        )));
    }
    if spec.r_high > spec.r_total {
        return Err(Error::InvalidParameter(format!(
            "high-coefficient rank {} exceeds total rank {}",
            spec.r_high, spec.r_total
        )));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "density must lie in (0,1], got {}",
            spec.density
        )));
    }
    if spec.high_coef < 0.0 || spec.low_coef < 0.0 {
        return Err(Error::InvalidParameter(
            "coefficients must be nonnegative for a PSD operator".into(),
        ));
    }
    let nnz = ((spec.density * spec.n as f64).ceil() as usize).clamp(1, spec.n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let columns: Vec<SparseColumn> = (0..spec.r_total)
        .map(|_| draw_sparse_column(spec.n, nnz, &mut rng))
        .collect();
    let coeffs: Vec<f64> = (1..=spec.r_total)
        .map(|j| {
            let c = if j <= spec.r_high {
                spec.high_coef
            } else {
                spec.low_coef
            };
            c / (j * j) as f64
        })
        .collect();
    let op = FactoredSparseOperator::new(spec.n, columns, coeffs)?;
    let model = op.spectral_model()?;
    Ok((op, model))
}

/// Assemble the dense matrix of an operator by applying it to the identity.
/// Intended for oracles and imports at `n <= 2000`.
pub fn assemble_dense(op: &dyn HermitianOperator) -> DMatrix<f64> {
    let n = op.dim();
    op.apply(&DMatrix::<f64>::identity(n, n))
}

/// Largest order accepted for dense import and dense eigensolve work.
pub const DENSE_LIMIT: usize = 2000;

/// Read a dense symmetric matrix from a whitespace-delimited text file:
/// first token is the order `n`, followed by `n*n` entries in row-major
/// order (line breaks do not matter).
pub fn read_dense_symmetric(path: &std::path::Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = text.split_whitespace();
    let n: usize = tokens
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad order: {e}")))?;
    if n == 0 {
        return Err(Error::Parse("matrix order must be positive".into()));
    }
    if n > DENSE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "dense import limited to order {DENSE_LIMIT}, file declares {n}"
        )));
    }
    let mut entries = Vec::with_capacity(n * n);
    for tok in tokens {
        let v: f64 = tok
            .parse()
            .map_err(|e| Error::Parse(format!("bad entry {tok:?}: {e}")))?;
        entries.push(v);
    }
    if entries.len() != n * n {
        return Err(Error::Parse(format!(
            "expected {} entries for order {n}, found {}",
            n * n,
            entries.len()
        )));
    }
    Ok(DMatrix::from_row_slice(n, n, &entries))
}

/// Wrap a dense symmetric PSD matrix as an operator with a full spectral
/// model (dense eigensolve; order capped at [`DENSE_LIMIT`]).
pub fn dense_operator_with_model(a: DMatrix<f64>) -> Result<(DenseOperator, SpectralModel)> {
    let n = a.nrows();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "dense eigensolve limited to order {DENSE_LIMIT}, got {n}"
        )));
    }
    let eig = la::sym_eig(&a)?;
    let lmax = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let floor = -1e-8 * lmax.max(1.0);
    let mut pairs: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut eigenvalues = Vec::with_capacity(n);
    for &(v, _) in &pairs {
        if v < floor {
            return Err(Error::NotPsd(format!(
                "eigenvalue {v:.3e} below tolerance {floor:.3e}"
            )));
        }
        eigenvalues.push(v.max(0.0));
    }
    let basis = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, pairs[c].1)]);
    let model = SpectralModel::new(eigenvalues, Some(EigenBasis::Dense(basis)))?;
    let op = DenseOperator::new(la::symmetrize(&a))?;
    Ok((op, model))
}
