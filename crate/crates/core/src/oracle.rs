//! Dense reference solutions used to cross-check the propagators.
//!
//! Nothing in here shares code with the Runge-Kutta path: states are evolved
//! with the Padé matrix exponential of `-iHt`, density matrices with the
//! exponential of the vectorised Liouvillian (a `D^2 x D^2` matrix, so only
//! small instances are practical).

use nalgebra::{DMatrix, DVector};

use crate::model::JumpOperator;
use crate::C64;

/// `exp(-i H t) psi0` for a dense Hermitian `h`.
pub fn expm_state(h: &DMatrix<C64>, psi0: &DVector<C64>, t: f64) -> DVector<C64> {
    (h * C64::new(0.0, -t)).exp() * psi0
}

/// Vectorised master-equation generator acting on column-major `vec(rho)`.
pub fn liouvillian(h: &DMatrix<C64>, jumps: &[JumpOperator]) -> DMatrix<C64> {
    let d = h.nrows();
    let id = DMatrix::<C64>::identity(d, d);
    let minus_i = C64::new(0.0, -1.0);
    // vec(A X B) = (B^T kron A) vec(X)
    let mut l = id.kronecker(h) * minus_i - h.transpose().kronecker(&id) * minus_i;
    for j in jumps.iter().filter(|j| j.rate > 0.0) {
        let o = j.matrix.to_dense();
        let od_o = o.adjoint() * &o;
        let r = C64::new(j.rate, 0.0);
        l += (o.conjugate().kronecker(&o) * C64::new(2.0, 0.0)
            - id.kronecker(&od_o)
            - od_o.transpose().kronecker(&id))
            * r;
    }
    l
}

/// `rho(t)` by exponentiating the full Liouvillian.
pub fn liouvillian_expm(h: &DMatrix<C64>, jumps: &[JumpOperator], rho0: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let d = rho0.nrows();
    let l = liouvillian(h, jumps) * C64::new(t, 0.0);
    let v = l.exp() * DVector::from_column_slice(rho0.as_slice());
    DMatrix::from_column_slice(d, d, v.as_slice())
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue<R, C, S>(m: &nalgebra::Matrix<C64, R, C, S>) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S: nalgebra::storage::Storage<C64, R, C>,
{
    let dense = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    dense.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}
