//! Thin wrappers over `matrixmultiply::dgemm` for the two products the
//! basis construction spends its time in. Everything is column-major.

use nalgebra::DMatrix;

/// `A' * B` where both are column-major slices with `n` rows: `a` holds
/// `ma` columns, `b` holds `mb` columns. Returns an `ma x mb` matrix.
pub(crate) fn at_b(a: &[f64], b: &[f64], n: usize, ma: usize, mb: usize) -> DMatrix<f64> {
    debug_assert_eq!(a.len(), n * ma);
    debug_assert_eq!(b.len(), n * mb);
    let mut c = DMatrix::<f64>::zeros(ma, mb);
    if n == 0 || ma == 0 || mb == 0 {
        return c;
    }
    unsafe {
        matrixmultiply::dgemm(
            ma,
            n,
            mb,
            1.0,
            a.as_ptr(),
            n as isize, // A' row stride = column stride of A
            1,          // A' col stride = row stride of A
            b.as_ptr(),
            1,
            n as isize,
            0.0,
            c.as_mut_slice().as_mut_ptr(),
            1,
            ma as isize,
        );
    }
    c
}

/// `block -= basis * coeff` where `basis` is an `n x mb` column-major
/// slice and `coeff` is `mb x s`.
pub(crate) fn sub_mul(block: &mut DMatrix<f64>, basis: &[f64], n: usize, mb: usize, coeff: &DMatrix<f64>) {
    debug_assert_eq!(basis.len(), n * mb);
    debug_assert_eq!(coeff.nrows(), mb);
    debug_assert_eq!(block.nrows(), n);
    debug_assert_eq!(coeff.ncols(), block.ncols());
    let s = block.ncols();
    if n == 0 || mb == 0 || s == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            n,
            mb,
            s,
            -1.0,
            basis.as_ptr(),
            1,
            n as isize,
            coeff.as_slice().as_ptr(),
            1,
            mb as isize,
            1.0,
            block.as_mut_slice().as_mut_ptr(),
            1,
            n as isize,
        );
    }
}
