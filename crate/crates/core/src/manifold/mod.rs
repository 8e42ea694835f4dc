//! Embedded manifolds: the unit sphere `S^{d-1} ⊂ R^d` and the Stiefel
//! manifold of `d × s` matrices with orthonormal columns.
//!
//! Points and tangent vectors are always stored in ambient (embedding)
//! coordinates. Stiefel matrices are flattened column-major, so a `d × s`
//! point is a vector of length `ds` and `vec(X)` is its storage.

mod sphere;
mod stiefel;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::SymmetricOperator;

/// Tolerance for `|xᵀx − 1|` (sphere) or `‖XᵀX − I‖_F` (Stiefel).
pub const MEMBERSHIP_TOL: f64 = 1e-10;
/// Tolerance for `‖Πv − v‖ / max(1, ‖v‖)`.
pub const TANGENCY_TOL: f64 = 1e-10;
/// Largest constraint violation [`Manifold::reproject`] will repair.
pub const MAX_REPROJECT_DRIFT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Sphere,
    Stiefel,
}

/// Shape of an embedded manifold. The sphere is stored as `s = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Manifold {
    kind: ManifoldKind,
    d: usize,
    s: usize,
}

/// Point on a manifold in embedding coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    coords: DVector<f64>,
}

impl ManifoldPoint {
    pub(crate) fn from_raw(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Ambient vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    coords: DVector<f64>,
}

impl TangentVector {
    pub(crate) fn from_raw(base: ManifoldPoint, coords: DVector<f64>) -> Self {
        Self { base, coords }
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    pub fn into_parts(self) -> (ManifoldPoint, DVector<f64>) {
        (self.base, self.coords)
    }
}

impl Manifold {
    /// The unit sphere in `R^d`.
    pub fn sphere(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("sphere needs ambient dimension >= 2, got {d}")));
        }
        Ok(Self {
            kind: ManifoldKind::Sphere,
            d,
            s: 1,
        })
    }

    /// The Stiefel manifold of `d × s` orthonormal frames.
    pub fn stiefel(d: usize, s: usize) -> Result<Self> {
        if s < 1 || s > d {
            return Err(invalid(format!("Stiefel manifold needs 1 <= s <= d, got d={d}, s={s}")));
        }
        Ok(Self {
            kind: ManifoldKind::Stiefel,
            d,
            s,
        })
    }

    pub fn new(kind: ManifoldKind, d: usize, s: usize) -> Result<Self> {
        match kind {
            ManifoldKind::Sphere if s != 1 => Err(invalid(format!("sphere has s = 1, got s = {s}"))),
            ManifoldKind::Sphere => Self::sphere(d),
            ManifoldKind::Stiefel => Self::stiefel(d, s),
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.d
    }

    pub fn cols(&self) -> usize {
        self.s
    }

    pub fn ambient_dim(&self) -> usize {
        self.d * self.s
    }

    /// `d − 1` for the sphere, `ds − s(s+1)/2` for Stiefel.
    pub fn tangent_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.d - 1,
            ManifoldKind::Stiefel => self.d * self.s - self.s * (self.s + 1) / 2,
        }
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.ambient_dim() {
            return Err(invalid(format!(
                "{what} has length {len}, expected {}",
                self.ambient_dim()
            )));
        }
        Ok(())
    }

    /// Constraint violation of an arbitrary ambient vector.
    pub fn constraint_violation(&self, coords: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => (coords.norm_squared() - 1.0).abs(),
            ManifoldKind::Stiefel => stiefel::violation(&self.as_matrix(coords)),
        }
    }

    pub fn point(&self, coords: DVector<f64>) -> Result<ManifoldPoint> {
        self.check_len(coords.len(), "point")?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("point has non-finite coordinates"));
        }
        let violation = self.constraint_violation(&coords);
        if violation > MEMBERSHIP_TOL {
            return Err(invalid(format!(
                "point is off the manifold (violation {violation:.3e})"
            )));
        }
        Ok(ManifoldPoint::from_raw(coords))
    }

    /// Builds a point from a `d × s` matrix.
    pub fn point_from_matrix(&self, x: &DMatrix<f64>) -> Result<ManifoldPoint> {
        if x.nrows() != self.d || x.ncols() != self.s {
            return Err(invalid(format!(
                "expected a {}x{} matrix, got {}x{}",
                self.d,
                self.s,
                x.nrows(),
                x.ncols()
            )));
        }
        self.point(DVector::from_column_slice(x.as_slice()))
    }

    /// Reshapes flattened coordinates into the `d × s` matrix they encode.
    pub fn as_matrix(&self, coords: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.d, self.s, coords.as_slice())
    }

    /// `e₁` for the sphere, the first `s` columns of `I_d` for Stiefel.
    pub fn base_point(&self) -> ManifoldPoint {
        let x = DMatrix::identity(self.d, self.s);
        ManifoldPoint::from_raw(DVector::from_column_slice(x.as_slice()))
    }

    pub fn tangent(&self, x: &ManifoldPoint, coords: DVector<f64>) -> Result<TangentVector> {
        self.check_len(x.len(), "point")?;
        self.check_len(coords.len(), "tangent vector")?;
        let residual = (self.project(x.coords(), &coords) - &coords).norm();
        if residual > TANGENCY_TOL * coords.norm().max(1.0) {
            return Err(invalid(format!(
                "vector is not tangent at the base point (residual {residual:.3e})"
            )));
        }
        Ok(TangentVector::from_raw(x.clone(), coords))
    }

    /// Orthogonal projection `Π_x` onto the tangent space as a dense
    /// `ambient_dim × ambient_dim` matrix.
    ///
    /// For Stiefel this is assembled from Kronecker products and the
    /// commutation matrix, `I − ½ (I_s ⊗ X)(P + I)(I_s ⊗ Xᵀ)` with `P` the
    /// `s² × s²` commutation matrix.
    pub fn projection(&self, x: &ManifoldPoint) -> Result<SymmetricOperator> {
        self.check_len(x.len(), "point")?;
        Ok(self.projection_raw(x.coords()))
    }

    pub(crate) fn projection_raw(&self, x: &DVector<f64>) -> SymmetricOperator {
        match self.kind {
            ManifoldKind::Sphere => sphere::projection(x),
            ManifoldKind::Stiefel => stiefel::projection(&self.as_matrix(x)),
        }
    }

    /// Applies `Π_x` to `v` without forming the matrix: `v − x(xᵀv)` for the
    /// sphere and `V − ½X(VᵀX + XᵀV)` for Stiefel.
    pub fn project(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere => sphere::project(x, v),
            ManifoldKind::Stiefel => {
                let p = stiefel::project(&self.as_matrix(x), &self.as_matrix(v));
                DVector::from_column_slice(p.as_slice())
            }
        }
    }

    /// Follows the geodesic through `v.base()` with initial velocity `v` for
    /// time `t`. Returns the endpoint together with the transported velocity.
    pub fn geodesic_flow(&self, v: &TangentVector, t: f64) -> Result<TangentVector> {
        self.check_len(v.base().len(), "point")?;
        self.check_len(v.coords().len(), "tangent vector")?;
        if !t.is_finite() {
            return Err(invalid("geodesic time must be finite"));
        }
        let (x, v) = self.flow_raw(v.base().coords(), v.coords(), t)?;
        Ok(TangentVector::from_raw(ManifoldPoint::from_raw(x), v))
    }

    pub(crate) fn flow_raw(&self, x: &DVector<f64>, v: &DVector<f64>, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        match self.kind {
            ManifoldKind::Sphere => Ok(sphere::geodesic(x, v, t)),
            ManifoldKind::Stiefel => {
                let (y, w) = stiefel::geodesic(&self.as_matrix(x), &self.as_matrix(v), t)?;
                Ok((
                    DVector::from_column_slice(y.as_slice()),
                    DVector::from_column_slice(w.as_slice()),
                ))
            }
        }
    }

    /// Draws from the uniform (Haar) distribution on the manifold.
    pub fn reference_uniform_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ManifoldPoint {
        let coords = match self.kind {
            ManifoldKind::Sphere => sphere::uniform(self.d, rng),
            ManifoldKind::Stiefel => {
                let x = stiefel::haar(self.d, self.s, rng);
                DVector::from_column_slice(x.as_slice())
            }
        };
        ManifoldPoint::from_raw(coords)
    }

    /// Pulls a slightly drifted vector back onto the manifold.
    pub fn reproject(&self, coords: &DVector<f64>) -> Result<ManifoldPoint> {
        self.check_len(coords.len(), "point")?;
        let violation = self.constraint_violation(coords);
        if !(violation <= MAX_REPROJECT_DRIFT) {
            return Err(Error::DriftTooLarge {
                violation,
                limit: MAX_REPROJECT_DRIFT,
            });
        }
        let out = match self.kind {
            ManifoldKind::Sphere => coords / coords.norm(),
            ManifoldKind::Stiefel => {
                let q = stiefel::orthonormalize(&self.as_matrix(coords));
                DVector::from_column_slice(q.as_slice())
            }
        };
        Ok(ManifoldPoint::from_raw(out))
    }
}
