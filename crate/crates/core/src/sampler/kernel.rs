//! Split-Hamiltonian transition kernels.
//!
//! One leapfrog step is: half kick of `v` at `x`, map `v ↦ ṽ = (ΠMΠ)^{1/2} v`,
//! geodesic flow of `(x, ṽ)` for time `ε`, map back with
//! `((ΠMΠ)⁺)^{1/2}` evaluated at the new point, and a second half kick.
//! The classic kernel is the same loop with `M = I`, where the maps are the
//! identity on tangent vectors and are skipped.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mass::{draw_velocity, projected_mass_raw, MassMatrix, ProjectedMass};
use crate::error::{invalid, Result};
use crate::manifold::{Manifold, ManifoldKind};
use crate::target::{LogDensity, Target};

/// Step used for the finite-difference `∇ log Det(ΠMΠ)` on Stiefel.
pub const LOG_DET_FD_STEP: f64 = 1e-5;

static IDENTITY: MassMatrix = MassMatrix::Identity;

/// Which kernel to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Momentum `p ~ N(0, ΠMΠ)`; energies carry `+log Det(ΠMΠ)`.
    Momentum,
    /// Velocity `v ~ N(0, (ΠMΠ)⁺)`; the pseudo-determinants cancel.
    Velocity,
    /// Geodesic Monte Carlo with `M = I`.
    Classic,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Momentum, Variant::Velocity, Variant::Classic];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Momentum => "momentum",
            Variant::Velocity => "velocity",
            Variant::Classic => "classic",
        }
    }
}

/// Sign of the `(ΠMΠ)⁺ΠMx` term in the kick.
///
/// `AsWritten` uses `−` for [`Variant::Momentum`] and `+` for
/// [`Variant::Velocity`]. `GradientConsistent` flips both, which is what
/// `−∂/∂x` of the position part of each Hamiltonian gives once
/// `∇ log Det(ΠMΠ) = −2 (ΠMΠ)⁺ΠMx` is substituted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    #[default]
    AsWritten,
    GradientConsistent,
}

impl SignConvention {
    pub const ALL: [SignConvention; 2] = [SignConvention::AsWritten, SignConvention::GradientConsistent];

    pub fn name(self) -> &'static str {
        match self {
            SignConvention::AsWritten => "as_written",
            SignConvention::GradientConsistent => "gradient_consistent",
        }
    }
}

fn correction_sign(variant: Variant, sign: SignConvention) -> f64 {
    let printed = match variant {
        Variant::Momentum => -1.0,
        Variant::Velocity => 1.0,
        Variant::Classic => 0.0,
    };
    match sign {
        SignConvention::AsWritten => printed,
        SignConvention::GradientConsistent => -printed,
    }
}

/// `(ΠMΠ)⁺ Π M x`, which equals `−½ ∇ₓ log Det(ΠMΠ)`.
///
/// Closed form on the sphere. On Stiefel it is `−½` times a central
/// finite difference of the log pseudo-determinant. Zero for `M = I`, where
/// `log Det(Π) ≡ 0` on the manifold.
pub fn log_det_correction(
    manifold: &Manifold,
    mass: &MassMatrix,
    pm: &ProjectedMass,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if mass.is_identity() {
        return Ok(DVector::zeros(x.len()));
    }
    match manifold.kind() {
        ManifoldKind::Sphere => {
            let pmx = pm.projection().apply(&mass.apply(x));
            Ok(pm.pseudo_inverse().apply(&pmx))
        }
        ManifoldKind::Stiefel => Ok(log_det_gradient_fd(manifold, mass, x, LOG_DET_FD_STEP)? * -0.5),
    }
}

/// Closed form `∇ₓ log Det(ΠMΠ) = −2 (ΠMΠ)⁺ΠMx`. The derivation uses
/// `dΠ = −(dx)xᵀ − x(dx)ᵀ` and so holds on the sphere only.
pub fn log_det_gradient_sphere(manifold: &Manifold, mass: &MassMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
    if manifold.kind() != ManifoldKind::Sphere {
        return Err(invalid("closed-form log-det gradient is for the sphere"));
    }
    mass.check_dim(manifold.ambient_dim())?;
    let pm = projected_mass_raw(manifold, mass, x)?;
    let pmx = pm.projection().apply(&mass.apply(x));
    Ok(pm.pseudo_inverse().apply(&pmx) * -2.0)
}

/// Central differences of `Σ_{i ≤ k} log λᵢ(Π(x) M Π(x))` with
/// `k = tangent_dim`, where `Π(x)` is the ambient extension of the
/// projection formula.
pub fn log_det_gradient_fd(
    manifold: &Manifold,
    mass: &MassMatrix,
    x: &DVector<f64>,
    step: f64,
) -> Result<DVector<f64>> {
    let k = manifold.tangent_dim();
    let log_det = |p: &DVector<f64>| -> Result<f64> {
        let proj = manifold.projection_raw(p);
        let op = match mass {
            MassMatrix::Identity => proj.matrix() * proj.matrix(),
            MassMatrix::Diagonal(d) => proj.matrix() * nalgebra::DMatrix::from_diagonal(d) * proj.matrix(),
            MassMatrix::Dense(m) => proj.matrix() * m.matrix() * proj.matrix(),
        };
        let op = crate::linalg::SymmetricOperator::symmetrized(op);
        crate::linalg::factorize(&op, crate::linalg::RankTolerance::Standard)?.log_leading_det(k)
    };
    let mut probe = x.clone();
    let mut grad = DVector::zeros(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = log_det(&probe)?;
        probe[i] = orig - step;
        let down = log_det(&probe)?;
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// `v + h (ΠMΠ)⁺ (∇ log π + σ c)` with `c = (ΠMΠ)⁺ΠMx`, or `v + h Π ∇ log π`
/// for the classic kernel.
pub fn kick(
    variant: Variant,
    sign: SignConvention,
    pm: &ProjectedMass,
    v: &DVector<f64>,
    grad: &DVector<f64>,
    correction: &DVector<f64>,
    half_step: f64,
) -> DVector<f64> {
    match variant {
        Variant::Classic => v + pm.projection().apply(grad) * half_step,
        _ => {
            let force = grad + correction * correction_sign(variant, sign);
            v + pm.pseudo_inverse().apply(&force) * half_step
        }
    }
}

/// `−log π + log Det(ΠMΠ) + ½ vᵀ(ΠMΠ)v` for [`Variant::Momentum`],
/// `−log π + ½ vᵀ(ΠMΠ)v` otherwise.
pub fn energy(variant: Variant, pm: &ProjectedMass, log_pi: f64, v: &DVector<f64>) -> f64 {
    let kinetic = 0.5 * pm.operator().quadratic_form(v);
    match variant {
        Variant::Momentum => -log_pi + pm.log_pseudo_det() + kinetic,
        Variant::Velocity | Variant::Classic => -log_pi + kinetic,
    }
}

/// Position, velocity and the projected mass at the position.
#[derive(Debug, Clone)]
pub struct PhaseState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pm: ProjectedMass,
}

impl PhaseState {
    pub fn projected_mass(&self) -> &ProjectedMass {
        &self.pm
    }
}

/// Outcome of one deterministic trajectory from `(x₀, v₀)`.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub start: PhaseState,
    pub end: PhaseState,
    pub energy_start: f64,
    pub energy_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    /// Energy at the start of the trajectory.
    pub energy: f64,
    /// Energy at the proposed state.
    pub proposed_energy: f64,
    pub log_uniform: f64,
    pub accepted: bool,
    /// Constraint violation of the proposed point.
    pub drift: f64,
    pub speed_start: f64,
    pub speed_end: f64,
    /// The trajectory hit a numerical error and was rejected.
    pub failed: bool,
}

/// The deterministic part of a kernel: kicks, velocity maps and geodesic
/// flow for one target and mass matrix.
#[derive(Clone, Copy)]
pub struct Integrator<'a> {
    manifold: Manifold,
    target: &'a Target,
    mass: &'a MassMatrix,
    variant: Variant,
    sign: SignConvention,
    reproject: bool,
}

impl<'a> Integrator<'a> {
    /// The classic variant always runs with `M = I`, whatever `mass` is.
    pub fn new(target: &'a Target, mass: &'a MassMatrix, variant: Variant, sign: SignConvention) -> Result<Self> {
        let manifold = *target.manifold();
        mass.check_dim(manifold.ambient_dim())?;
        let mass = if variant == Variant::Classic { &IDENTITY } else { mass };
        Ok(Self {
            manifold,
            target,
            mass,
            variant,
            sign,
            reproject: false,
        })
    }

    pub fn with_reprojection(mut self, reproject: bool) -> Self {
        self.reproject = reproject;
        self
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn projected_mass(&self, x: &DVector<f64>) -> Result<ProjectedMass> {
        projected_mass_raw(&self.manifold, self.mass, x)
    }

    pub fn state(&self, x: DVector<f64>, v: DVector<f64>) -> Result<PhaseState> {
        if x.len() != self.manifold.ambient_dim() || v.len() != x.len() {
            return Err(invalid("state dimension does not match the manifold"));
        }
        let pm = self.projected_mass(&x)?;
        Ok(PhaseState { x, v, pm })
    }

    /// `state` with the velocity negated.
    pub fn reversed(&self, state: &PhaseState) -> PhaseState {
        PhaseState {
            x: state.x.clone(),
            v: -&state.v,
            pm: state.pm.clone(),
        }
    }

    fn half_kick(&self, x: &DVector<f64>, pm: &ProjectedMass, v: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
        let grad = self.target.grad_log_density_ambient(x);
        let correction = match self.variant {
            Variant::Classic => DVector::zeros(x.len()),
            _ => log_det_correction(&self.manifold, self.mass, pm, x)?,
        };
        Ok(kick(self.variant, self.sign, pm, v, &grad, &correction, h))
    }

    pub fn energy(&self, state: &PhaseState) -> f64 {
        let log_pi = self.target.log_density_ambient(&state.x);
        energy(self.variant, &state.pm, log_pi, &state.v)
    }

    pub fn leapfrog_step(&self, state: &PhaseState, epsilon: f64) -> Result<PhaseState> {
        let h = 0.5 * epsilon;
        let v = self.half_kick(&state.x, &state.pm, &state.v, h)?;
        let v_tilde = match self.variant {
            Variant::Classic => v,
            _ => state.pm.sqrt().apply(&v),
        };
        let (mut x, mut v_tilde) = self.manifold.flow_raw(&state.x, &v_tilde, epsilon)?;
        if self.reproject {
            x = self.manifold.reproject(&x)?.into_coords();
            v_tilde = self.manifold.project(&x, &v_tilde);
        }
        let pm = self.projected_mass(&x)?;
        let v = match self.variant {
            Variant::Classic => v_tilde,
            _ => pm.inv_sqrt().apply(&v_tilde),
        };
        let v = self.half_kick(&x, &pm, &v, h)?;
        Ok(PhaseState { x, v, pm })
    }

    pub fn integrate(&self, state: &PhaseState, epsilon: f64, n_steps: usize) -> Result<PhaseState> {
        let mut s = state.clone();
        for _ in 0..n_steps {
            s = self.leapfrog_step(&s, epsilon)?;
        }
        Ok(s)
    }

    pub fn propose(&self, start: PhaseState, epsilon: f64, n_steps: usize) -> Result<Proposal> {
        let end = self.integrate(&start, epsilon, n_steps)?;
        Ok(Proposal {
            energy_start: self.energy(&start),
            energy_end: self.energy(&end),
            start,
            end,
        })
    }

    /// One Metropolis-adjusted transition from `x`. Draws the velocity and
    /// then `u ~ U(0,1)`, in that order, for every variant.
    pub fn transition<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        epsilon: f64,
        n_steps: usize,
        rng: &mut R,
    ) -> Result<(DVector<f64>, TransitionRecord)> {
        let pm = self.projected_mass(x)?;
        let v = draw_velocity(&pm, rng);
        let u: f64 = rng.gen();
        let log_uniform = u.ln();
        let start = PhaseState { x: x.clone(), v, pm };
        let energy = self.energy(&start);
        let speed_start = start.v.norm();

        let end = self.integrate(&start, epsilon, n_steps).ok();
        let (proposed_energy, drift, speed_end) = match &end {
            Some(s) => (self.energy(s), self.manifold.constraint_violation(&s.x), s.v.norm()),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let failed = end.is_none() || !proposed_energy.is_finite();
        // NaN compares false, so failures reject.
        let accepted = !failed && log_uniform < energy - proposed_energy;
        let record = TransitionRecord {
            energy,
            proposed_energy,
            log_uniform,
            accepted,
            drift,
            speed_start,
            speed_end,
            failed,
        };
        let next = match end {
            Some(s) if accepted => s.x,
            _ => x.clone(),
        };
        Ok((next, record))
    }
}
