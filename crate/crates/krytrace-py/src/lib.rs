//! Python bindings: the operator families, both estimators, the
//! Hutchinson baseline, and the bound evaluations.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use krytrace::bounds;
use krytrace::estimators::{estimate_from_compression, hutchinson_trace, Algorithm};
use krytrace::experiments::run_table1;
use krytrace::linop::{
    dense_operator_with_model, make_diagonal_operator, make_sparse_lowrank_operator,
    GeometricDecaySpec, HermitianOperator, SparseLowRankSpec, SpectralModel,
};
use krytrace::sketch::{
    block_krylov_basis, gaussian_matrix as gaussian, subspace_iteration_basis, SketchConfig,
    Stabilization,
};

fn to_py_err(e: krytrace::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(PyValueError::new_err("empty matrix"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Result of one compression run.
#[pyclass]
struct Compression {
    #[pyo3(get)]
    trace_estimate: f64,
    #[pyo3(get)]
    logdet_estimate: f64,
    #[pyo3(get)]
    m: usize,
    #[pyo3(get)]
    deflated: bool,
    /// Relative errors against the exact references, when known.
    #[pyo3(get)]
    delta_t: Option<f64>,
    #[pyo3(get)]
    delta_l: Option<f64>,
}

/// Matrix-free Hermitian PSD operator with (optionally) exact references.
#[pyclass]
struct Operator {
    op: Box<dyn HermitianOperator>,
    model: Option<SpectralModel>,
}

#[pymethods]
impl Operator {
    /// Geometric eigenvalue decay: eigenvalue j+1 is tau^j * lambda1.
    #[staticmethod]
    fn geometric(n: usize, lambda1: f64, tau: f64) -> PyResult<Self> {
        let (op, model) =
            make_diagonal_operator(&GeometricDecaySpec { n, lambda1, tau }).map_err(to_py_err)?;
        Ok(Self {
            op: Box::new(op),
            model: Some(model),
        })
    }

    /// Sparse low-rank sum with the standard rank split (40 high / 300
    /// total, clamped to the order).
    #[staticmethod]
    #[pyo3(signature = (n, h, lcoef, density=0.025, seed=1))]
    fn sparse_lowrank(n: usize, h: f64, lcoef: f64, density: f64, seed: u64) -> PyResult<Self> {
        let r_total = 300.min(n);
        let spec = SparseLowRankSpec {
            n,
            high_coef: h,
            low_coef: lcoef,
            density,
            r_high: 40.min(r_total),
            r_total,
            seed,
        };
        let (op, model) = make_sparse_lowrank_operator(&spec).map_err(to_py_err)?;
        Ok(Self {
            op: Box::new(op),
            model: Some(model),
        })
    }

    /// Dense symmetric PSD matrix (row-major nested lists).
    #[staticmethod]
    fn from_dense(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let a = matrix_from_rows(rows)?;
        let (op, model) = dense_operator_with_model(a).map_err(to_py_err)?;
        Ok(Self {
            op: Box::new(op),
            model: Some(model),
        })
    }

    fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Block product `A @ X` for a row-major block.
    fn apply(&self, block: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix_from_rows(block)?;
        if x.nrows() != self.op.dim() {
            return Err(PyValueError::new_err(format!(
                "block has {} rows, operator order is {}",
                x.nrows(),
                self.op.dim()
            )));
        }
        Ok(matrix_to_rows(&self.op.apply(&x)))
    }

    fn eigenvalues(&self) -> Option<Vec<f64>> {
        self.model.as_ref().map(|m| m.eigenvalues().to_vec())
    }

    fn exact_trace(&self) -> Option<f64> {
        self.model.as_ref().map(|m| m.exact_trace())
    }

    fn exact_logdet(&self) -> Option<f64> {
        self.model.as_ref().map(|m| m.exact_logdet_shifted())
    }

    /// Run one estimator: algorithm is "krylov" or "subspace".
    #[pyo3(signature = (k, p, q, seed, algorithm="krylov", stabilized=true))]
    fn compress(
        &self,
        k: usize,
        p: usize,
        q: usize,
        seed: u64,
        algorithm: &str,
        stabilized: bool,
    ) -> PyResult<Compression> {
        let mut cfg = SketchConfig::new(k, p, q, seed);
        if !stabilized {
            cfg.stabilization = Stabilization::Idealized;
        }
        cfg.validate(self.op.dim()).map_err(to_py_err)?;
        let omega = gaussian(self.op.dim(), cfg.l(), seed).map_err(to_py_err)?;
        let (alg, comp) = match algorithm {
            "krylov" => (
                Algorithm::Krylov,
                block_krylov_basis(self.op.as_ref(), &omega, &cfg).map_err(to_py_err)?,
            ),
            "subspace" => (
                Algorithm::Subspace,
                subspace_iteration_basis(self.op.as_ref(), &omega, &cfg).map_err(to_py_err)?,
            ),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown algorithm {other:?}; expected \"krylov\" or \"subspace\""
                )))
            }
        };
        let rec = estimate_from_compression(&comp, &cfg, alg).map_err(to_py_err)?;
        let (delta_t, delta_l) = match &self.model {
            Some(m) if m.exact_trace() > 0.0 && m.exact_logdet_shifted() > 0.0 => {
                let (dt, dl) = krytrace::estimators::relative_errors(
                    m.exact_trace(),
                    m.exact_logdet_shifted(),
                    &rec,
                )
                .map_err(to_py_err)?;
                (Some(dt), Some(dl))
            }
            _ => (None, None),
        };
        Ok(Compression {
            trace_estimate: rec.trace_estimate,
            logdet_estimate: rec.logdet_estimate,
            m: rec.m_effective,
            deflated: rec.deflated,
            delta_t,
            delta_l,
        })
    }

    /// Hutchinson Monte Carlo trace estimate.
    fn hutchinson(&self, samples: usize, seed: u64) -> PyResult<f64> {
        hutchinson_trace(self.op.as_ref(), samples, seed).map_err(to_py_err)
    }
}

/// Deterministic Gaussian probe (row-major).
#[pyfunction]
fn gaussian_matrix(n: usize, l: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    Ok(matrix_to_rows(&gaussian(n, l, seed).map_err(to_py_err)?))
}

/// Chebyshev polynomial T_q(x).
#[pyfunction]
fn chebyshev_t(q: usize, x: f64) -> f64 {
    bounds::chebyshev_t(q, x)
}

/// The reference table of gap factors as a 4x3 nested list
/// (rows: krylov/baseline expectation, krylov/baseline concentration;
/// columns: q = 3, 4, 5).
#[pyfunction]
#[pyo3(signature = (delta=0.01))]
fn table1(delta: f64) -> PyResult<Vec<Vec<f64>>> {
    let t = run_table1(delta).map_err(to_py_err)?;
    Ok(t.rows.iter().map(|r| r.to_vec()).collect())
}

fn model_from_eigenvalues(eigenvalues: Vec<f64>) -> PyResult<SpectralModel> {
    SpectralModel::new(eigenvalues, None).map_err(to_py_err)
}

/// Expectation bounds (trace, logdet) on the estimation gaps for a known
/// nonincreasing spectrum.
#[pyfunction]
fn expectation_bounds(eigenvalues: Vec<f64>, k: usize, p: usize, q: usize) -> PyResult<(f64, f64)> {
    let model = model_from_eigenvalues(eigenvalues)?;
    bounds::expectation_bounds(&model, k, p, q).map_err(to_py_err)
}

/// Concentration bounds (trace, logdet) holding with probability 1 - delta.
#[pyfunction]
fn concentration_bounds(
    eigenvalues: Vec<f64>,
    k: usize,
    p: usize,
    q: usize,
    delta: f64,
) -> PyResult<(f64, f64)> {
    let model = model_from_eigenvalues(eigenvalues)?;
    bounds::concentration_bounds(&model, k, p, q, delta).map_err(to_py_err)
}

#[pymodule]
fn _krytrace(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Operator>()?;
    m.add_class::<Compression>()?;
    m.add_function(wrap_pyfunction!(gaussian_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(chebyshev_t, m)?)?;
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    m.add_function(wrap_pyfunction!(expectation_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(concentration_bounds, m)?)?;
    Ok(())
}
