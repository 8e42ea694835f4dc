//! Geodesic Monte Carlo kernels with general positive semi-definite mass
//! matrices.

mod chain;
mod kernel;
mod mass;

pub use chain::{chain_rng, run_chain, run_chain_on_stream, ChainConfig, ChainOutput};
pub use kernel::{
    energy, kick, log_det_correction, log_det_gradient_fd, log_det_gradient_sphere, Integrator, PhaseState, Proposal,
    SignConvention, TransitionRecord, Variant, LOG_DET_FD_STEP,
};
pub use mass::{draw_velocity, projected_mass, MassMatrix, ProjectedMass};
