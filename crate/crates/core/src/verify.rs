//! Built-in verification suites behind `geomc verify`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diagnostics::{compare_to_oracle, resultant_length_z, MIN_ESS_LEN};
use crate::error::{invalid, Result};
use crate::linalg::{commutation_matrix, factorize, vec, RankTolerance, SymmetricOperator};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::sampler::{
    chain_rng, draw_velocity, log_det_gradient_fd, log_det_gradient_sphere, projected_mass, run_chain_on_stream,
    ChainConfig, Integrator, MassMatrix, SignConvention, Variant,
};
use crate::target::{fd_gradient_check, sample_von_mises_fisher, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Linalg,
    Gradients,
    Reduction,
    Reversibility,
    Statistical,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Linalg,
        Suite::Gradients,
        Suite::Reduction,
        Suite::Reversibility,
        Suite::Statistical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Linalg => "linalg",
            Suite::Gradients => "gradients",
            Suite::Reduction => "reduction",
            Suite::Reversibility => "reversibility",
            Suite::Statistical => "statistical",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

/// One measured quantity against its bound. Passes when `measured <= tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.3e}, tolerance {:.3e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Chain length for the statistical suite.
    pub samples: usize,
    pub z_threshold: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 20_000,
            z_threshold: crate::diagnostics::DEFAULT_Z_THRESHOLD,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<Check>> {
    match suite {
        Suite::Linalg => linalg(opts),
        Suite::Gradients => gradients(opts),
        Suite::Reduction => reduction(opts),
        Suite::Reversibility => reversibility(opts),
        Suite::Statistical => statistical(opts),
    }
}

fn gaussian_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// `BBᵀ/n + I/2` for a Gaussian `B`.
pub fn random_dense_mass(n: usize, rng: &mut ChaCha8Rng) -> MassMatrix {
    let b = gaussian_matrix(n, n, rng);
    let m = &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5;
    MassMatrix::dense((&m + m.transpose()) * 0.5).expect("positive definite by construction")
}

fn linalg(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = chain_rng(opts.seed, 0);
    let mut checks = Vec::new();

    let mut penrose = 0.0_f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=12);
        let k = rng.gen_range(0..=n);
        let b = gaussian_matrix(n, k, &mut rng);
        let a = SymmetricOperator::symmetrized(&b * b.transpose());
        let p = factorize(&a, RankTolerance::Standard)?.pseudo_inverse();
        let (a, p) = (a.matrix(), p.matrix());
        let scale = a.amax().max(1.0);
        let residuals = [
            (a * p * a - a).amax() / scale,
            (p * a * p - p).amax() / p.amax().max(1.0),
            (a * p - (a * p).transpose()).amax(),
            (p * a - (p * a).transpose()).amax(),
        ];
        penrose = residuals.into_iter().fold(penrose, f64::max);
    }
    checks.push(Check::new(
        "Moore-Penrose axioms, 100 random PSD matrices",
        penrose,
        1e-9,
    ));

    let k = commutation_matrix(3, 2)?;
    let mut comm = 0.0_f64;
    for _ in 0..20 {
        let a = gaussian_matrix(3, 2, &mut rng);
        comm = comm.max((k.apply(&vec(&a)) - vec(&a.transpose())).amax());
    }
    checks.push(Check::new("commutation matrix K vec(A) = vec(A^T)", comm, 0.0));

    let mut proj = 0.0_f64;
    for (d, s) in [(4, 2), (5, 3)] {
        let m = Manifold::stiefel(d, s)?;
        for _ in 0..100 {
            let x = m.reference_uniform_sample(&mut rng);
            let v = DVector::from_fn(d * s, |_, _| StandardNormal.sample(&mut rng));
            let kron = m.projection(&x)?.apply(&v);
            proj = proj.max((kron - m.project(x.coords(), &v)).amax());
        }
    }
    checks.push(Check::new("Stiefel projection, Kronecker vs direct form", proj, 1e-12));

    let mut logdet = 0.0_f64;
    for m in [Manifold::sphere(3)?, Manifold::stiefel(4, 2)?] {
        for _ in 0..100 {
            let x = m.reference_uniform_sample(&mut rng);
            let f = factorize(&m.projection(&x)?, RankTolerance::Standard)?;
            logdet = logdet.max(f.log_pseudo_det()?.abs());
        }
    }
    checks.push(Check::new("log pseudo-determinant of the projection", logdet, 1e-10));
    Ok(checks)
}

fn random_bingham(m: Manifold, rng: &mut ChaCha8Rng) -> Result<Target> {
    let (d, s) = (m.rows(), m.cols());
    let c = gaussian_matrix(d, s, rng);
    let a0 = gaussian_matrix(d, d, rng);
    let b = DVector::from_fn(s, |i, _| 1.0 - 0.5 * i as f64);
    Target::bingham_von_mises_fisher(m, c, (&a0 + a0.transpose()) * 0.25, b)
}

fn gradients(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = chain_rng(opts.seed, 1);
    let s2 = Manifold::sphere(3)?;
    let mass = random_dense_mass(3, &mut rng);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let x = s2.reference_uniform_sample(&mut rng).into_coords();
        let closed = log_det_gradient_sphere(&s2, &mass, &x)?;
        let fd = log_det_gradient_fd(&s2, &mass, &x, 1e-5)?;
        worst = worst.max((&closed - &fd).amax() / closed.amax().max(f64::MIN_POSITIVE));
    }
    let mut checks = vec![Check::new(
        "closed-form log-det gradient vs finite differences on S^2",
        worst,
        1e-6,
    )];

    let mu = DVector::from_row_slice(&[0.0, 0.6, 0.8]);
    let targets = [
        ("von Mises-Fisher on S^2", Target::von_mises_fisher(s2, 5.0, mu)?),
        (
            "Bingham-von Mises-Fisher on S^4",
            random_bingham(Manifold::sphere(5)?, &mut rng)?,
        ),
        (
            "Bingham-von Mises-Fisher on Stiefel(4,2)",
            random_bingham(Manifold::stiefel(4, 2)?, &mut rng)?,
        ),
    ];
    for (name, t) in targets {
        let mut err = 0.0_f64;
        for _ in 0..20 {
            let x = t.manifold().reference_uniform_sample(&mut rng);
            err = err.max(fd_gradient_check(&t, &x, 1e-6)?);
        }
        checks.push(Check::new(format!("target gradient, {name}"), err, 1e-6));
    }
    Ok(checks)
}

fn reduction(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = chain_rng(opts.seed, 2);
    let mu = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
    let targets = [
        Target::von_mises_fisher(Manifold::sphere(3)?, 3.0, mu)?,
        random_bingham(Manifold::stiefel(4, 2)?, &mut rng)?,
    ];
    let cfg = ChainConfig {
        epsilon: 0.1,
        n_leapfrog: 5,
        n_samples: 1000,
        n_burnin: 0,
        seed: opts.seed,
        ..ChainConfig::default()
    };
    let mut checks = Vec::new();
    for t in &targets {
        let m = *t.manifold();
        let x0 = m.reference_uniform_sample(&mut rng);
        let runs = Variant::ALL.map(|variant| {
            run_chain_on_stream(
                &ChainConfig { variant, ..cfg.clone() },
                t,
                &MassMatrix::Identity,
                &x0,
                0,
            )
        });
        let [a, b, c] = runs;
        let (a, b, c) = (a?, b?, c?);
        let mut dev = 0.0_f64;
        for i in 0..a.len() {
            for other in [&b, &c] {
                dev = dev.max((&a.samples[i] - &other.samples[i]).amax());
                dev = dev.max((a.records[i].energy - other.records[i].energy).abs());
                dev = dev.max((a.records[i].proposed_energy - other.records[i].proposed_energy).abs());
            }
        }
        checks.push(Check::new(
            format!("M = I variants agree over 1000 transitions on {}", describe(&m)),
            dev,
            1e-12,
        ));
        let mut det = 0.0_f64;
        for x in &a.samples {
            let pm = projected_mass(&m, &MassMatrix::Identity, &m.point(x.clone())?)?;
            det = det.max(pm.log_pseudo_det().abs());
        }
        checks.push(Check::new(
            format!("M = I pseudo-determinant energy term on {}", describe(&m)),
            det,
            0.0,
        ));
    }
    Ok(checks)
}

fn describe(m: &Manifold) -> String {
    match m.kind() {
        crate::manifold::ManifoldKind::Sphere => format!("S^{}", m.rows() - 1),
        crate::manifold::ManifoldKind::Stiefel => format!("Stiefel({},{})", m.rows(), m.cols()),
    }
}

fn reversibility(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = chain_rng(opts.seed, 3);
    let mu = DVector::from_row_slice(&[0.0, 0.6, 0.8]);
    let sphere_t = Target::von_mises_fisher(Manifold::sphere(3)?, 3.0, mu)?;
    let stiefel_t = random_bingham(Manifold::stiefel(4, 2)?, &mut rng)?;
    let mut checks = Vec::new();
    for t in [&sphere_t, &stiefel_t] {
        let m = *t.manifold();
        let mass = random_dense_mass(m.ambient_dim(), &mut rng);
        for variant in Variant::ALL {
            let integ = Integrator::new(t, &mass, variant, SignConvention::AsWritten)?;
            let mut worst = 0.0_f64;
            for _ in 0..50 {
                let x = m.reference_uniform_sample(&mut rng).into_coords();
                let v = draw_velocity(&integ.projected_mass(&x)?, &mut rng);
                let start = integ.state(x, v)?;
                let end = integ.integrate(&start, 0.05, 20)?;
                let back = integ.integrate(&integ.reversed(&end), 0.05, 20)?;
                worst = worst.max((&back.x - &start.x).amax());
                worst = worst.max((&back.v + &start.v).amax());
            }
            checks.push(Check::new(
                format!("{} round trip on {}", variant.name(), describe(&m)),
                worst,
                1e-8,
            ));
        }
    }
    Ok(checks)
}

fn second_moments(samples: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(samples[0].len());
    for x in samples {
        acc += x.component_mul(x);
    }
    acc / samples.len() as f64
}

fn statistical(opts: &VerifyOptions) -> Result<Vec<Check>> {
    if opts.samples < MIN_ESS_LEN {
        return Err(invalid(format!(
            "insufficient samples: statistical suite needs at least {MIN_ESS_LEN} per chain, got {}",
            opts.samples
        )));
    }
    let n = opts.samples;
    let mut rng = chain_rng(opts.seed, 4);
    let s2 = Manifold::sphere(3)?;
    let cfg = ChainConfig {
        epsilon: 0.2,
        n_leapfrog: 10,
        n_samples: n,
        n_burnin: 500,
        seed: opts.seed,
        ..ChainConfig::default()
    };
    let mut checks = Vec::new();

    let uniform = Target::uniform(s2);
    let out = run_chain_on_stream(&cfg, &uniform, &MassMatrix::Identity, &s2.base_point(), 0)?;
    let dev = (second_moments(&out.samples).add_scalar(-1.0 / 3.0)).amax();
    checks.push(Check::new("uniform S^2 second moments vs 1/3", dev, 0.01));

    let mu = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
    let vmf = Target::von_mises_fisher(s2, 5.0, mu.clone())?;
    let oracle: Vec<_> = (0..n).map(|_| sample_von_mises_fisher(5.0, &mu, &mut rng)).collect();
    for (label, mass) in [
        ("M = I", MassMatrix::Identity),
        ("dense M", random_dense_mass(3, &mut rng)),
    ] {
        let out = run_chain_on_stream(&cfg, &vmf, &mass, &s2.base_point(), 1)?;
        let cmp = compare_to_oracle(&out.samples, &oracle)?;
        let z = cmp.mean_z.iter().fold(0.0_f64, |a, z| a.max(z.abs()));
        let zr = resultant_length_z(&out.samples, &oracle)?.abs();
        checks.push(Check::new(
            format!("vMF kappa=5 mean and resultant |z|, velocity kernel, {label}"),
            z.max(zr),
            opts.z_threshold,
        ));
    }

    let st = Manifold::stiefel(4, 2)?;
    let stiefel_cfg = ChainConfig {
        variant: Variant::Classic,
        epsilon: 0.3,
        ..cfg.clone()
    };
    let out = run_chain_on_stream(
        &stiefel_cfg,
        &Target::uniform(st),
        &MassMatrix::Identity,
        &st.base_point(),
        2,
    )?;
    let mean = out.samples.iter().fold(DVector::zeros(8), |a, x| a + x) / n as f64;
    let dev = mean.amax().max(second_moments(&out.samples).add_scalar(-0.25).amax());
    checks.push(Check::new("uniform Stiefel(4,2) moments vs Haar values", dev, 0.01));

    let mass = random_dense_mass(3, &mut rng);
    let mut cov_err = 0.0_f64;
    let mut tangency = 0.0_f64;
    let draws = 100_000;
    for _ in 0..5 {
        let x: ManifoldPoint = s2.reference_uniform_sample(&mut rng);
        let pm = projected_mass(&s2, &mass, &x)?;
        let mut cov = DMatrix::zeros(3, 3);
        for _ in 0..draws {
            let v = draw_velocity(&pm, &mut rng);
            tangency = tangency.max(x.coords().dot(&v).abs());
            cov += &v * v.transpose();
        }
        cov /= draws as f64;
        let target = pm.pseudo_inverse().matrix();
        cov_err = cov_err.max((&cov - target).norm() / target.norm());
    }
    checks.push(Check::new(
        "degenerate Gaussian covariance, relative Frobenius",
        cov_err,
        0.02,
    ));
    checks.push(Check::new("degenerate Gaussian draws tangent", tangency, 1e-10));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn deterministic_suites_pass() {
        let opts = VerifyOptions::default();
        for suite in [Suite::Linalg, Suite::Gradients, Suite::Reduction, Suite::Reversibility] {
            for check in run_suite(suite, &opts).unwrap() {
                assert!(check.passed(), "{check}");
            }
        }
    }

    #[test]
    fn statistical_suite_guards_short_chains() {
        let opts = VerifyOptions {
            samples: 1,
            ..VerifyOptions::default()
        };
        let err = run_suite(Suite::Statistical, &opts).unwrap_err();
        assert!(err.to_string().contains("insufficient samples"));
    }

    #[test]
    fn check_formatting() {
        let c = Check::new("x", 1e-13, 1e-12);
        assert!(c.passed());
        assert!(c.to_string().starts_with("PASS x: measured 1.000e-13"));
        assert!(!Check::new("y", f64::NAN, 1.0).passed());
    }
}
