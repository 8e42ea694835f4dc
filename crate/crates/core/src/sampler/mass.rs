use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{factorize, RankTolerance, SpectralFactorization, SymmetricOperator};
use crate::manifold::{Manifold, ManifoldPoint};

const PSD_TOL: f64 = 1e-10;

/// Positive semi-definite mass matrix over the ambient space.
#[derive(Debug, Clone, PartialEq)]
pub enum MassMatrix {
    Identity,
    Diagonal(DVector<f64>),
    Dense(SymmetricOperator),
}

impl MassMatrix {
    pub fn diagonal(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("diagonal mass matrix is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("diagonal mass matrix has non-finite entries"));
        }
        let max = values.amax();
        if let Some(v) = values.iter().find(|&&v| v < -PSD_TOL * max) {
            return Err(Error::NotPsd(format!("diagonal entry {v:e} < 0")));
        }
        Ok(Self::Diagonal(values))
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        let op = SymmetricOperator::new(matrix)?;
        let f = factorize(&op, RankTolerance::Standard)?;
        let eig = f.eigenvalues();
        let max = eig.amax();
        let min = eig[eig.len() - 1];
        if min < -PSD_TOL * max {
            return Err(Error::NotPsd(format!(
                "smallest eigenvalue {min:e} below -1e-10 * {max:e}"
            )));
        }
        Ok(Self::Dense(op))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, MassMatrix::Identity)
    }

    /// Dimension of the matrix, `None` for the identity (which fits any).
    pub fn dim(&self) -> Option<usize> {
        match self {
            MassMatrix::Identity => None,
            MassMatrix::Diagonal(v) => Some(v.len()),
            MassMatrix::Dense(op) => Some(op.dim()),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(k) if k != n => Err(invalid(format!("mass matrix is {k}x{k}, ambient dimension is {n}"))),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            MassMatrix::Identity => v.clone(),
            MassMatrix::Diagonal(d) => d.component_mul(v),
            MassMatrix::Dense(op) => op.apply(v),
        }
    }

    fn sandwich(&self, projection: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            MassMatrix::Identity => projection.clone(),
            MassMatrix::Diagonal(d) => {
                let mut right = projection.clone();
                for (i, mut row) in right.row_iter_mut().enumerate() {
                    row *= d[i];
                }
                projection * right
            }
            MassMatrix::Dense(op) => projection * op.matrix() * projection,
        }
    }
}

/// `Π_x M Π_x` at one point with everything the integrator needs from it.
#[derive(Debug, Clone)]
pub struct ProjectedMass {
    projection: SymmetricOperator,
    operator: SymmetricOperator,
    factorization: Option<SpectralFactorization>,
    pseudo_inverse: SymmetricOperator,
    sqrt: SymmetricOperator,
    inv_sqrt: SymmetricOperator,
    log_pseudo_det: f64,
    rank: usize,
}

impl ProjectedMass {
    pub fn projection(&self) -> &SymmetricOperator {
        &self.projection
    }

    /// `Π M Π`.
    pub fn operator(&self) -> &SymmetricOperator {
        &self.operator
    }

    /// `None` when `M = I`; no eigendecomposition is performed then.
    pub fn factorization(&self) -> Option<&SpectralFactorization> {
        self.factorization.as_ref()
    }

    pub fn pseudo_inverse(&self) -> &SymmetricOperator {
        &self.pseudo_inverse
    }

    pub fn sqrt(&self) -> &SymmetricOperator {
        &self.sqrt
    }

    /// `((Π M Π)⁺)^{1/2}`.
    pub fn inv_sqrt(&self) -> &SymmetricOperator {
        &self.inv_sqrt
    }

    pub fn log_pseudo_det(&self) -> f64 {
        self.log_pseudo_det
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

pub fn projected_mass(manifold: &Manifold, mass: &MassMatrix, x: &ManifoldPoint) -> Result<ProjectedMass> {
    if x.len() != manifold.ambient_dim() {
        return Err(invalid(format!(
            "point has length {}, expected {}",
            x.len(),
            manifold.ambient_dim()
        )));
    }
    mass.check_dim(manifold.ambient_dim())?;
    projected_mass_raw(manifold, mass, x.coords())
}

pub(crate) fn projected_mass_raw(manifold: &Manifold, mass: &MassMatrix, x: &DVector<f64>) -> Result<ProjectedMass> {
    let projection = manifold.projection_raw(x);
    if mass.is_identity() {
        return Ok(ProjectedMass {
            operator: projection.clone(),
            factorization: None,
            pseudo_inverse: projection.clone(),
            sqrt: projection.clone(),
            inv_sqrt: projection.clone(),
            log_pseudo_det: 0.0,
            rank: manifold.tangent_dim(),
            projection,
        });
    }
    let operator = SymmetricOperator::symmetrized(mass.sandwich(projection.matrix()));
    // Π has rank tangent_dim, so no more eigenvalues than that can be real.
    let factorization = factorize(&operator, RankTolerance::Standard)?.with_max_rank(manifold.tangent_dim());
    Ok(ProjectedMass {
        pseudo_inverse: factorization.pseudo_inverse(),
        sqrt: factorization.psd_sqrt()?,
        inv_sqrt: factorization.psd_inv_sqrt()?,
        log_pseudo_det: factorization.log_pseudo_det()?,
        rank: factorization.rank(),
        factorization: Some(factorization),
        operator,
        projection,
    })
}

/// `v ~ N(0, (Π M Π)⁺)`, drawn as `((Π M Π)⁺)^{1/2} z` with `z` standard
/// normal in the ambient space.
pub fn draw_velocity<R: Rng + ?Sized>(pm: &ProjectedMass, rng: &mut R) -> DVector<f64> {
    let n = pm.operator.dim();
    let z: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    pm.inv_sqrt.apply(&z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_dense_mass(n: usize, seed: u64) -> MassMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let m = &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5;
        MassMatrix::dense((&m + m.transpose()) * 0.5).unwrap()
    }

    #[test]
    fn identity_short_circuits() {
        let s = Manifold::sphere(3).unwrap();
        let pm = projected_mass(&s, &MassMatrix::Identity, &s.base_point()).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.0, 1.0, 1.0]));
        for op in [pm.operator(), pm.pseudo_inverse(), pm.sqrt(), pm.inv_sqrt()] {
            assert_eq!(op.matrix(), &expected);
        }
        assert_eq!(pm.log_pseudo_det(), 0.0);
        assert!(pm.factorization().is_none());
        assert_eq!(pm.rank(), 2);
    }

    #[test]
    fn scaled_identity_log_det() {
        let s = Manifold::sphere(3).unwrap();
        let mass = MassMatrix::diagonal(DVector::from_element(3, 4.0)).unwrap();
        let pm = projected_mass(&s, &mass, &s.base_point()).unwrap();
        assert!((pm.log_pseudo_det() - 2.0 * 4.0_f64.ln()).abs() < 1e-14);
        assert_eq!(pm.rank(), 2);
    }

    #[test]
    fn mass_validation() {
        assert!(matches!(
            MassMatrix::diagonal(DVector::from_row_slice(&[1.0, -1.0])),
            Err(Error::NotPsd(_))
        ));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(MassMatrix::dense(indefinite), Err(Error::NotPsd(_))));
        let s = Manifold::sphere(3).unwrap();
        let wrong = MassMatrix::diagonal(DVector::from_element(4, 1.0)).unwrap();
        assert!(projected_mass(&s, &wrong, &s.base_point()).is_err());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(MassMatrix::dense(singular).is_ok());
    }

    #[test]
    fn diagonal_and_dense_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = Manifold::stiefel(4, 2).unwrap();
        let d = DVector::from_fn(8, |i, _| 0.5 + i as f64 * 0.25);
        let diag = MassMatrix::diagonal(d.clone()).unwrap();
        let dense = MassMatrix::dense(DMatrix::from_diagonal(&d)).unwrap();
        let x = st.reference_uniform_sample(&mut rng);
        let a = projected_mass(&st, &diag, &x).unwrap();
        let b = projected_mass(&st, &dense, &x).unwrap();
        assert!((a.operator().matrix() - b.operator().matrix()).abs().max() < 1e-14);
        assert!((a.log_pseudo_det() - b.log_pseudo_det()).abs() < 1e-12);
    }

    #[test]
    fn projected_cache_invariants_hold_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for m in [
            Manifold::sphere(3).unwrap(),
            Manifold::sphere(6).unwrap(),
            Manifold::stiefel(4, 2).unwrap(),
            Manifold::stiefel(5, 3).unwrap(),
        ] {
            let mass = random_dense_mass(m.ambient_dim(), 40 + m.ambient_dim() as u64);
            for _ in 0..500 {
                let x = m.reference_uniform_sample(&mut rng);
                let pm = projected_mass(&m, &mass, &x).unwrap();
                assert_eq!(pm.rank(), m.tangent_dim());
                let p = pm.projection().matrix();
                let pinv = pm.pseudo_inverse().matrix();
                assert!((p * pinv * p - pinv).abs().max() < 1e-9);
                let s = pm.sqrt().matrix();
                assert!((s * s - pm.operator().matrix()).abs().max() < 1e-9);
                let is = pm.inv_sqrt().matrix();
                assert!((is * is - pinv).abs().max() < 1e-9);
            }
        }
    }

    #[test]
    fn draws_are_tangent_and_identity_draws_are_projected_gaussians() {
        let s = Manifold::sphere(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pm = projected_mass(&s, &MassMatrix::Identity, &s.base_point()).unwrap();
        let n = 20_000;
        let (mut var2, mut var3) = (0.0, 0.0);
        for _ in 0..n {
            let v = draw_velocity(&pm, &mut rng);
            assert_eq!(v[0], 0.0);
            var2 += v[1] * v[1];
            var3 += v[2] * v[2];
        }
        assert!((var2 / n as f64 - 1.0).abs() < 0.05);
        assert!((var3 / n as f64 - 1.0).abs() < 0.05);

        let mass = random_dense_mass(3, 1);
        let x = s.reference_uniform_sample(&mut rng);
        let pm = projected_mass(&s, &mass, &x).unwrap();
        for _ in 0..1000 {
            let v = draw_velocity(&pm, &mut rng);
            assert!((pm.projection().apply(&v) - &v).norm() < 1e-10);
        }
    }
}
