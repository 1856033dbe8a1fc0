//! Regularized Hermitian solves and Gram-matrix helpers on top of faer.

use faer::linalg::matmul::triangular::{matmul, BlockStructure};
use faer::prelude::*;
use faer::{Accum, Par, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// `YᴴY` as a full Hermitian matrix.
pub fn gram(y: MatRef<'_, C64>) -> Mat<C64> {
    let p = y.ncols();
    let mut s = Mat::<C64>::zeros(p, p);
    matmul(
        s.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        y.adjoint(),
        BlockStructure::Rectangular,
        y,
        BlockStructure::Rectangular,
        C64::new(1.0, 0.0),
        Par::Seq,
    );
    for j in 0..p {
        s[(j, j)].im = 0.0;
        for i in 0..j {
            s[(i, j)] = s[(j, i)].conj();
        }
    }
    s
}

/// `Yᴴ e`.
pub fn adjoint_times(y: MatRef<'_, C64>, e: &[C64]) -> Vec<C64> {
    let col = ColRef::from_slice(e);
    let out = y.adjoint() * col;
    (0..out.nrows()).map(|i| out[i]).collect()
}

fn all_finite(v: &[C64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Solves `(S + λI) δ = f` for Hermitian `S`: Cholesky first, then an
/// eigendecomposition pseudo-inverse.
pub fn shifted_solve(s: MatRef<'_, C64>, f: &[C64], lambda: f64) -> Result<Vec<C64>> {
    let p = s.nrows();
    if s.ncols() != p || f.len() != p {
        return Err(Error::Dimension(format!(
            "matrix is {}×{}, right-hand side has length {}",
            s.nrows(),
            s.ncols(),
            f.len()
        )));
    }
    let a = Mat::<C64>::from_fn(p, p, |i, j| {
        let v = if i >= j { s[(i, j)] } else { s[(j, i)].conj() };
        if i == j {
            C64::new(v.re + lambda, 0.0)
        } else {
            v
        }
    });
    let rhs = Col::<C64>::from_fn(p, |i| f[i]);
    if let Ok(llt) = a.llt(Side::Lower) {
        let x = llt.solve(&rhs);
        let out: Vec<C64> = (0..p).map(|i| x[i]).collect();
        if all_finite(&out) {
            return Ok(out);
        }
    }
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::SingularUpdate { lambda })?;
    let u = eig.U();
    let d = eig.S();
    let dmax = (0..p).map(|i| d[i].re.abs()).fold(0.0, f64::max);
    let cut = dmax * p as f64 * f64::EPSILON;
    let proj = u.adjoint() * &rhs;
    let scaled = Col::<C64>::from_fn(p, |i| {
        let di = d[i].re;
        if di.abs() > cut {
            proj[i] / di
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let x = u * &scaled;
    let out: Vec<C64> = (0..p).map(|i| x[i]).collect();
    if all_finite(&out) && dmax > 0.0 {
        Ok(out)
    } else {
        Err(Error::SingularUpdate { lambda })
    }
}

/// [`shifted_solve`] with one retry at `10 λ`.
pub fn shifted_solve_escalating(s: MatRef<'_, C64>, f: &[C64], lambda: f64) -> Result<(Vec<C64>, f64)> {
    match shifted_solve(s, f, lambda) {
        Ok(x) => Ok((x, lambda)),
        Err(Error::SingularUpdate { .. }) => {
            let l = 10.0 * lambda;
            shifted_solve(s, f, l).map(|x| (x, l))
        }
        Err(e) => Err(e),
    }
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(s: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = s
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::NonFinite("eigenvalue solver failed".into()))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn symmetric_eigenvalues(s: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = s
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::NonFinite("eigenvalue solver failed".into()))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}
