use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::SymmetricOperator;

/// `I − xxᵀ`.
pub(super) fn projection(x: &DVector<f64>) -> SymmetricOperator {
    let n = x.len();
    SymmetricOperator::symmetrized(DMatrix::identity(n, n) - x * x.transpose())
}

pub(super) fn project(x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    v - x * x.dot(v)
}

/// Great-circle flow:
/// `x(t) = x cos(‖v‖t) + v/‖v‖ sin(‖v‖t)`, `v(t) = v cos(‖v‖t) − x‖v‖ sin(‖v‖t)`.
pub(super) fn geodesic(x: &DVector<f64>, v: &DVector<f64>, t: f64) -> (DVector<f64>, DVector<f64>) {
    let speed = v.norm();
    if speed == 0.0 {
        return (x.clone(), v.clone());
    }
    let (sin, cos) = (speed * t).sin_cos();
    let x_t = x * cos + v * (sin / speed);
    let v_t = v * cos - x * (speed * sin);
    (x_t, v_t)
}

pub(super) fn uniform<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let z: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let norm = z.norm();
        if norm > 0.0 {
            return z / norm;
        }
    }
}
