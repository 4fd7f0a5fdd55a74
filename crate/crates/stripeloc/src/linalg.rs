//! Small dense least-squares helpers on top of nalgebra's QR.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on the diagonal of `R` below which a column is treated
/// as linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LsSolution<T: ComplexField> {
    pub x: DVector<T>,
    /// `‖b - A x‖²`.
    pub cost: f64,
}

/// Solves `min ‖b - A x‖` for a tall, full-column-rank `A`.
pub fn lstsq<T>(a: &DMatrix<T>, b: &DVector<T>) -> Result<LsSolution<T>>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = a.ncols();
    if n == 0 {
        return Ok(LsSolution {
            x: DVector::zeros(0),
            cost: b.norm_squared(),
        });
    }
    if a.nrows() < n {
        return Err(Error::RankDeficient {
            cols: n,
            rank: a.nrows(),
            cond: f64::INFINITY,
        });
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..n).map(|i| r[(i, i)].modulus()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > RANK_TOL * max) {
        let rank = diag.iter().filter(|d| **d > RANK_TOL * max).count();
        return Err(Error::RankDeficient {
            cols: n,
            rank,
            cond: max / min,
        });
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, n).into_owned();
    let x = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
    let resid = b - a * &x;
    Ok(LsSolution {
        cost: resid.norm_squared(),
        x,
    })
}

/// Orthonormal basis of the column space of a full-rank tall `A`.
pub fn orthonormal_basis<T>(a: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    a.clone().qr().q()
}

/// Orthonormal basis of the orthogonal complement of `range(A)`, computed
/// from the QR factorization of `[A  I]`.
pub fn null_space_basis<T>(a: &DMatrix<T>) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (rows, cols) = a.shape();
    if rows <= cols {
        return Err(Error::KernelEmpty { mk: rows, l: cols });
    }
    let mut aug = DMatrix::<T>::zeros(rows, cols + rows);
    aug.view_mut((0, 0), (rows, cols)).copy_from(a);
    aug.view_mut((0, cols), (rows, rows)).fill_with_identity();
    let q = aug.qr().q();
    Ok(q.columns(cols, rows - cols).into_owned())
}
