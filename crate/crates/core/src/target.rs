//! Unnormalized log-densities defined directly in embedding coordinates.
//!
//! Every family is written as a formula of the ambient coordinates, so it
//! extends off the manifold without change. That extension is what the
//! finite-difference gradient check differentiates.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::manifold::{Manifold, ManifoldKind, ManifoldPoint};

/// A log-density with gradient, both evaluated at ambient coordinates.
pub trait LogDensity: Send + Sync {
    fn log_density_ambient(&self, x: &DVector<f64>) -> f64;
    /// Ambient (unprojected) gradient.
    fn grad_log_density_ambient(&self, x: &DVector<f64>) -> DVector<f64>;
}

type LogFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

#[derive(Clone)]
pub enum Family {
    Uniform,
    /// `κ μᵀx` on the sphere.
    VonMisesFisher {
        kappa: f64,
        mu: DVector<f64>,
    },
    /// `tr(CᵀX) + tr(B XᵀAX)` with `A` symmetric and `B` diagonal.
    BinghamVonMisesFisher {
        c: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    },
    Custom {
        log_density: Arc<LogFn>,
        gradient: Arc<GradFn>,
    },
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Uniform => f.write_str("Uniform"),
            Family::VonMisesFisher { kappa, mu } => f
                .debug_struct("VonMisesFisher")
                .field("kappa", kappa)
                .field("mu", &mu.as_slice())
                .finish(),
            Family::BinghamVonMisesFisher { c, a, b } => f
                .debug_struct("BinghamVonMisesFisher")
                .field("c", c)
                .field("a", a)
                .field("b", &b.as_slice())
                .finish(),
            Family::Custom { .. } => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Target {
    manifold: Manifold,
    family: Family,
}

impl Target {
    pub fn uniform(manifold: Manifold) -> Self {
        Self {
            manifold,
            family: Family::Uniform,
        }
    }

    pub fn von_mises_fisher(manifold: Manifold, kappa: f64, mu: DVector<f64>) -> Result<Self> {
        if manifold.kind() != ManifoldKind::Sphere {
            return Err(invalid("von Mises-Fisher target is defined on the sphere"));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(invalid(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        if mu.len() != manifold.rows() {
            return Err(invalid(format!(
                "mu has length {}, expected {}",
                mu.len(),
                manifold.rows()
            )));
        }
        if (mu.norm_squared() - 1.0).abs() > 1e-10 {
            return Err(invalid("mu must be a unit vector"));
        }
        Ok(Self {
            manifold,
            family: Family::VonMisesFisher { kappa, mu },
        })
    }

    /// `c` is `d × s`, `a` is `d × d` symmetric, `b` holds the diagonal of
    /// the `s × s` matrix `B`.
    pub fn bingham_von_mises_fisher(
        manifold: Manifold,
        c: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self> {
        let (d, s) = (manifold.rows(), manifold.cols());
        if c.shape() != (d, s) {
            return Err(invalid(format!("C must be {d}x{s}, got {:?}", c.shape())));
        }
        if a.shape() != (d, d) {
            return Err(invalid(format!("A must be {d}x{d}, got {:?}", a.shape())));
        }
        if b.len() != s {
            return Err(invalid(format!("B diagonal must have length {s}, got {}", b.len())));
        }
        let scale = a.abs().max().max(1.0);
        if (&a - a.transpose()).abs().max() > 1e-12 * scale {
            return Err(invalid("A must be symmetric"));
        }
        Ok(Self {
            manifold,
            family: Family::BinghamVonMisesFisher { c, a, b },
        })
    }

    /// A user-supplied density given as a pair of callbacks.
    pub fn from_callbacks<L, G>(manifold: Manifold, log_density: L, gradient: G) -> Self
    where
        L: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            manifold,
            family: Family::Custom {
                log_density: Arc::new(log_density),
                gradient: Arc::new(gradient),
            },
        }
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    fn check(&self, x: &ManifoldPoint) -> Result<()> {
        if x.len() != self.manifold.ambient_dim() {
            return Err(invalid(format!(
                "point has length {}, expected {}",
                x.len(),
                self.manifold.ambient_dim()
            )));
        }
        let violation = self.manifold.constraint_violation(x.coords());
        if violation > crate::manifold::MEMBERSHIP_TOL {
            return Err(invalid(format!(
                "point is off the manifold (violation {violation:.3e})"
            )));
        }
        Ok(())
    }

    pub fn log_density(&self, x: &ManifoldPoint) -> Result<f64> {
        self.check(x)?;
        Ok(self.log_density_ambient(x.coords()))
    }

    pub fn grad_log_density(&self, x: &ManifoldPoint) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.grad_log_density_ambient(x.coords()))
    }

    fn as_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.manifold.as_matrix(x)
    }
}

impl LogDensity for Target {
    fn log_density_ambient(&self, x: &DVector<f64>) -> f64 {
        match &self.family {
            Family::Uniform => 0.0,
            Family::VonMisesFisher { kappa, mu } => kappa * mu.dot(x),
            Family::BinghamVonMisesFisher { c, a, b } => {
                let xm = self.as_matrix(x);
                let linear = c.dot(&xm);
                let ax = a * &xm;
                // tr(B XᵀAX) = Σ_j b_j x_jᵀ A x_j
                let quad: f64 = (0..xm.ncols()).map(|j| b[j] * xm.column(j).dot(&ax.column(j))).sum();
                linear + quad
            }
            Family::Custom { log_density, .. } => log_density(x),
        }
    }

    fn grad_log_density_ambient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.family {
            Family::Uniform => DVector::zeros(x.len()),
            Family::VonMisesFisher { kappa, mu } => mu * *kappa,
            Family::BinghamVonMisesFisher { c, a, b } => {
                let xm = self.as_matrix(x);
                let g = c + (a * xm * DMatrix::from_diagonal(b)) * 2.0;
                DVector::from_column_slice(g.as_slice())
            }
            Family::Custom { gradient, .. } => gradient(x),
        }
    }
}

/// Worst relative error over coordinates between the analytic gradient and
/// central differences of the ambient log-density, normalized by
/// `max(1, ‖∇‖∞)`.
pub fn fd_gradient_check(target: &Target, x: &ManifoldPoint, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(invalid("finite-difference step must be > 0"));
    }
    target.check(x)?;
    let analytic = target.grad_log_density_ambient(x.coords());
    let scale = analytic.amax().max(1.0);
    let mut worst = 0.0_f64;
    let mut probe = x.coords().clone();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = target.log_density_ambient(&probe);
        probe[i] = orig - step;
        let down = target.log_density_ambient(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max((numeric - analytic[i]).abs() / scale);
    }
    Ok(worst)
}

/// Wood's rejection sampler for the von Mises-Fisher distribution on
/// `S^{d-1}`, used as an independent reference for chain output.
pub fn sample_von_mises_fisher<R: Rng + ?Sized>(kappa: f64, mu: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    let d = mu.len();
    let tangent_gaussian = |rng: &mut R| -> DVector<f64> {
        loop {
            let z: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            let t = &z - mu * mu.dot(&z);
            let n = t.norm();
            if n > 1e-12 {
                return t / n;
            }
        }
    };
    if kappa == 0.0 {
        loop {
            let z: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            let n = z.norm();
            if n > 0.0 {
                return z / n;
            }
        }
    }
    let m = (d - 1) as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt()) / m;
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
    let beta = Beta::new(m / 2.0, m / 2.0).expect("valid beta parameters");
    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.gen();
        if kappa * w + m * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    let direction = tangent_gaussian(rng);
    mu * w + direction * (1.0 - w * w).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        (&m + m.transpose()) * 0.5
    }

    fn random_bvmf(m: Manifold, rng: &mut ChaCha8Rng) -> Target {
        let (d, s) = (m.rows(), m.cols());
        let c = DMatrix::from_fn(d, s, |_, _| StandardNormal.sample(rng));
        let a = sym(d, rng);
        let b = DVector::from_fn(s, |_, _| StandardNormal.sample(rng));
        Target::bingham_von_mises_fisher(m, c, a, b).unwrap()
    }

    #[test]
    fn log_density_examples() {
        let s = Manifold::sphere(3).unwrap();
        let e1 = s.base_point();
        let t = Target::von_mises_fisher(s, 2.0, e1.coords().clone()).unwrap();
        assert_eq!(t.log_density(&e1).unwrap(), 2.0);
        assert_eq!(t.grad_log_density(&e1).unwrap().as_slice(), &[2.0, 0.0, 0.0]);

        let u = Target::uniform(s);
        assert_eq!(u.log_density(&e1).unwrap(), 0.0);
        assert_eq!(u.grad_log_density(&e1).unwrap(), DVector::zeros(3));

        let st = Manifold::stiefel(4, 2).unwrap();
        let t = Target::bingham_von_mises_fisher(
            st,
            DMatrix::zeros(4, 2),
            DMatrix::identity(4, 4),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = st.reference_uniform_sample(&mut rng);
            assert!((t.log_density(&x).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters_and_points() {
        let s = Manifold::sphere(3).unwrap();
        let mu = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        assert!(Target::von_mises_fisher(s, -1.0, mu.clone()).is_err());
        assert!(Target::von_mises_fisher(s, 1.0, DVector::from_row_slice(&[1.0, 1.0, 0.0])).is_err());
        assert!(Target::von_mises_fisher(s, 1.0, DVector::from_row_slice(&[1.0, 0.0])).is_err());
        let st = Manifold::stiefel(3, 2).unwrap();
        assert!(Target::von_mises_fisher(st, 1.0, mu.clone()).is_err());
        let nonsym = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(Target::bingham_von_mises_fisher(st, DMatrix::zeros(3, 2), nonsym, DVector::zeros(2)).is_err());

        let t = Target::von_mises_fisher(s, 1.0, mu).unwrap();
        let off = ManifoldPoint::from_raw(DVector::from_row_slice(&[2.0, 0.0, 0.0]));
        assert!(t.log_density(&off).is_err());
        assert!(t.grad_log_density(&off).is_err());
    }

    #[test]
    fn gradients_pass_finite_difference_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Manifold::sphere(4).unwrap();
        let mu = s.reference_uniform_sample(&mut rng).into_coords();
        let vmf = Target::von_mises_fisher(s, 3.0, mu).unwrap();
        let uniform = Target::uniform(s);
        for m in [
            Manifold::sphere(3).unwrap(),
            Manifold::stiefel(4, 2).unwrap(),
            Manifold::stiefel(5, 3).unwrap(),
        ] {
            let bvmf = random_bvmf(m, &mut rng);
            for _ in 0..50 {
                let x = m.reference_uniform_sample(&mut rng);
                let err = fd_gradient_check(&bvmf, &x, 1e-5).unwrap();
                assert!(err < 1e-6, "bvmf fd err {err:e}");
            }
        }
        for _ in 0..50 {
            let x = s.reference_uniform_sample(&mut rng);
            assert!(fd_gradient_check(&vmf, &x, 1e-5).unwrap() < 1e-8);
            assert_eq!(fd_gradient_check(&uniform, &x, 1e-5).unwrap(), 0.0);
        }
        assert!(fd_gradient_check(&uniform, &s.base_point(), 0.0).is_err());
    }

    #[test]
    fn bingham_matrix_and_vec_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = Manifold::stiefel(4, 2).unwrap();
        let t = random_bvmf(m, &mut rng);
        let Family::BinghamVonMisesFisher { c, a, b } = t.family().clone() else {
            unreachable!()
        };
        for _ in 0..10 {
            let x = m.reference_uniform_sample(&mut rng);
            let xm = m.as_matrix(x.coords());
            let direct =
                (c.transpose() * &xm).trace() + (DMatrix::from_diagonal(&b) * xm.transpose() * &a * &xm).trace();
            assert!((t.log_density(&x).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn callback_target_uses_supplied_functions() {
        let s = Manifold::sphere(3).unwrap();
        let t = Target::from_callbacks(
            s,
            |x| x[2],
            |x| {
                let mut g = DVector::zeros(x.len());
                g[2] = 1.0;
                g
            },
        );
        let x = s.point(DVector::from_row_slice(&[0.0, 0.6, 0.8])).unwrap();
        assert_eq!(t.log_density(&x).unwrap(), 0.8);
        assert!(fd_gradient_check(&t, &x, 1e-5).unwrap() < 1e-8);
    }

    #[test]
    fn von_mises_fisher_oracle_mean_resultant() {
        // On S², E[μᵀx] = coth κ − 1/κ.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mu = DVector::from_row_slice(&[0.0, 0.6, 0.8]);
        let kappa = 5.0;
        let n = 50_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = sample_von_mises_fisher(kappa, &mu, &mut rng);
            assert!((x.norm() - 1.0).abs() < 1e-12);
            acc += mu.dot(&x);
        }
        let expected = 1.0 / kappa.tanh() - 1.0 / kappa;
        assert!((acc / n as f64 - expected).abs() < 0.005);
    }
}
