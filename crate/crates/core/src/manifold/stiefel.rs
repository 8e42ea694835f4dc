use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{commutation_matrix, kron, SymmetricOperator};

/// Largest `‖tB‖₁` handed to the matrix exponential. Beyond this the
/// scaling-and-squaring result is meaningless and its squaring count can
/// grow without bound.
pub(super) const MAX_EXP_NORM: f64 = 1e8;

/// `‖XᵀX − I‖_F`.
pub(super) fn violation(x: &DMatrix<f64>) -> f64 {
    let s = x.ncols();
    (x.transpose() * x - DMatrix::identity(s, s)).norm()
}

/// `I_{ds} − ½ (I_s ⊗ X)(P + I_{s²})(I_s ⊗ Xᵀ)`, where `P vec(XᵀV) = vec(VᵀX)`.
pub(super) fn projection(x: &DMatrix<f64>) -> SymmetricOperator {
    let (d, s) = x.shape();
    let eye_s = DMatrix::identity(s, s);
    let p = commutation_matrix(s, s).expect("s >= 1");
    // vec(XᵀV) = (I_s ⊗ Xᵀ) vec(V)
    let to_coeffs = kron(&eye_s, &x.transpose());
    let symmetrized = p.apply_rows(&to_coeffs) + &to_coeffs;
    // vec(X C) = (I_s ⊗ X) vec(C)
    let normal = kron(&eye_s, x) * symmetrized;
    SymmetricOperator::symmetrized(DMatrix::identity(d * s, d * s) - normal * 0.5)
}

/// `V − ½ X (VᵀX + XᵀV)`.
pub(super) fn project(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let xtv = x.transpose() * v;
    v - x * (&xtv + xtv.transpose()) * 0.5
}

/// Geodesic of the embedded (Euclidean) metric:
/// `Y(t) = [X V] exp(t [[A, −S], [I, A]]) [I; 0] exp(−tA)` with `A = XᵀV`,
/// `S = VᵀV`. The velocity is `[X V] exp(tB) [0; I] exp(−tA)`.
pub(super) fn geodesic(x: &DMatrix<f64>, v: &DMatrix<f64>, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if t == 0.0 || v.iter().all(|&c| c == 0.0) {
        return Ok((x.clone(), v.clone()));
    }
    let (d, s) = x.shape();
    let a = x.transpose() * v;
    let gram = v.transpose() * v;

    let mut block = DMatrix::zeros(2 * s, 2 * s);
    block.view_mut((0, 0), (s, s)).copy_from(&a);
    block.view_mut((0, s), (s, s)).copy_from(&(-gram));
    block.view_mut((s, 0), (s, s)).fill_with_identity();
    block.view_mut((s, s), (s, s)).copy_from(&a);
    let scaled = block * t;
    let norm = scaled.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    if !(norm <= MAX_EXP_NORM) || scaled.iter().any(|c| !c.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "geodesic step too long: |tB|_1 = {norm:e} exceeds {MAX_EXP_NORM:e}"
        )));
    }
    let g = scaled.exp();
    let back = (&a * (-t)).exp();

    let mut frame = DMatrix::zeros(d, 2 * s);
    frame.view_mut((0, 0), (d, s)).copy_from(x);
    frame.view_mut((0, s), (d, s)).copy_from(v);

    let y = &frame * g.columns(0, s) * &back;
    let w = &frame * g.columns(s, s) * &back;
    Ok((y, w))
}

/// Q factor of a thin QR with the signs fixed so that `diag(R) > 0`.
pub(super) fn orthonormalize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = x.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub(super) fn haar<R: Rng + ?Sized>(d: usize, s: usize, rng: &mut R) -> DMatrix<f64> {
    let z = DMatrix::from_fn(d, s, |_, _| StandardNormal.sample(rng));
    orthonormalize(&z)
}
