//! C interface to the `geomc` sampler.
//!
//! Every object is an opaque handle created by a `geomc_*_new*` function and
//! released by the matching `geomc_*_free`. Fallible calls return a
//! [`GeomcStatus`]; on failure [`geomc_last_error`] describes the cause.
//! Matrices are passed column-major, matching the sampler's vectorisation.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use geomc::manifold::Manifold;
use geomc::sampler::{run_chain_on_stream, ChainConfig, ChainOutput, MassMatrix, SignConvention, Variant};
use geomc::target::Target;
use geomc::Error;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomcStatus {
    Ok = 0,
    InvalidInput = 1,
    NumericalFailure = 2,
    NotPsd = 3,
    DriftTooLarge = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomcVariant {
    Momentum = 0,
    Velocity = 1,
    Classic = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomcSignConvention {
    AsWritten = 0,
    GradientConsistent = 1,
}

/// Chain settings; obtain defaults from [`geomc_chain_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GeomcChainConfig {
    pub variant: GeomcVariant,
    pub epsilon: f64,
    pub n_leapfrog: usize,
    pub n_samples: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub sign_convention: GeomcSignConvention,
    /// Nonzero to reproject onto the manifold after every transition.
    pub reproject: u8,
    pub max_drift: f64,
}

pub struct GeomcManifold(Manifold);
pub struct GeomcTarget(Target);
pub struct GeomcMass(MassMatrix);
pub struct GeomcChain {
    dim: usize,
    output: ChainOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: GeomcStatus, msg: impl Into<String>) -> GeomcStatus {
    set_error(msg.into());
    status
}

fn from_core(e: Error) -> GeomcStatus {
    let status = match e {
        Error::InvalidInput(_) => GeomcStatus::InvalidInput,
        Error::NumericalFailure(_) => GeomcStatus::NumericalFailure,
        Error::NotPsd(_) => GeomcStatus::NotPsd,
        Error::DriftTooLarge { .. } => GeomcStatus::DriftTooLarge,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into [`GeomcStatus::Panic`].
fn guard(f: impl FnOnce() -> GeomcStatus) -> GeomcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(GeomcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize) -> Option<&'a [f64]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> GeomcStatus {
    *out = Box::into_raw(Box::new(value));
    GeomcStatus::Ok
}

macro_rules! deref {
    ($p:expr, $name:literal) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(GeomcStatus::NullPointer, concat!($name, " is null")),
        }
    };
}

macro_rules! try_core {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_core(e),
        }
    };
}

macro_rules! input {
    ($data:expr, $len:expr, $name:literal) => {
        match slice($data, $len) {
            Some(s) => s,
            None => return fail(GeomcStatus::NullPointer, concat!($name, " is null")),
        }
    };
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn geomc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn geomc_manifold_new_sphere(d: usize, out: *mut *mut GeomcManifold) -> GeomcStatus {
    guard(|| {
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        emit(out, GeomcManifold(try_core!(Manifold::sphere(d))))
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn geomc_manifold_new_stiefel(d: usize, s: usize, out: *mut *mut GeomcManifold) -> GeomcStatus {
    guard(|| {
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        emit(out, GeomcManifold(try_core!(Manifold::stiefel(d, s))))
    })
}

/// Length `d·s` of a point's coordinate vector, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn geomc_manifold_ambient_dim(m: *const GeomcManifold) -> usize {
    m.as_ref().map_or(0, |m| m.0.ambient_dim())
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn geomc_manifold_free(m: *mut GeomcManifold) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn geomc_target_new_uniform(m: *const GeomcManifold, out: *mut *mut GeomcTarget) -> GeomcStatus {
    guard(|| {
        let m = deref!(m, "manifold");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        emit(out, GeomcTarget(Target::uniform(m.0)))
    })
}

/// von Mises-Fisher density `exp(κ μᵀx)` on a sphere; `mu` has `d` entries.
///
/// # Safety
/// `mu` must point to `mu_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn geomc_target_new_von_mises_fisher(
    m: *const GeomcManifold,
    kappa: f64,
    mu: *const f64,
    mu_len: usize,
    out: *mut *mut GeomcTarget,
) -> GeomcStatus {
    guard(|| {
        let m = deref!(m, "manifold");
        let mu = input!(mu, mu_len, "mu");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        let t = try_core!(Target::von_mises_fisher(m.0, kappa, DVector::from_column_slice(mu)));
        emit(out, GeomcTarget(t))
    })
}

/// Bingham-von Mises-Fisher density `exp(tr(CᵀX) + tr(diag(b) XᵀAX))`.
/// `c` is `d×s`, `a` is `d×d`, both column-major; `b` has `s` entries.
///
/// # Safety
/// Each array must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn geomc_target_new_bingham_von_mises_fisher(
    m: *const GeomcManifold,
    c: *const f64,
    a: *const f64,
    b: *const f64,
    out: *mut *mut GeomcTarget,
) -> GeomcStatus {
    guard(|| {
        let m = deref!(m, "manifold");
        let (d, s) = (m.0.rows(), m.0.cols());
        let c = input!(c, d * s, "c");
        let a = input!(a, d * d, "a");
        let b = input!(b, s, "b");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        let t = try_core!(Target::bingham_von_mises_fisher(
            m.0,
            DMatrix::from_column_slice(d, s, c),
            DMatrix::from_column_slice(d, d, a),
            DVector::from_column_slice(b),
        ));
        emit(out, GeomcTarget(t))
    })
}

/// Log density callback: `x` has `len` entries.
pub type GeomcLogDensityFn = extern "C" fn(x: *const f64, len: usize, user_data: *mut std::ffi::c_void) -> f64;
/// Ambient gradient callback: writes `len` entries to `grad`.
pub type GeomcGradientFn = extern "C" fn(x: *const f64, len: usize, grad: *mut f64, user_data: *mut std::ffi::c_void);

#[derive(Clone, Copy)]
struct UserData(*mut std::ffi::c_void);
// The caller promises the callbacks may be invoked from any thread.
unsafe impl Send for UserData {}
unsafe impl Sync for UserData {}

/// A density supplied by the caller. The callbacks may run on any thread and
/// `user_data` must outlive the target.
///
/// # Safety
/// `m` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn geomc_target_new_callbacks(
    m: *const GeomcManifold,
    log_density: GeomcLogDensityFn,
    gradient: GeomcGradientFn,
    user_data: *mut std::ffi::c_void,
    out: *mut *mut GeomcTarget,
) -> GeomcStatus {
    guard(|| {
        let m = deref!(m, "manifold");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        let (ld, gd) = (UserData(user_data), UserData(user_data));
        let t = Target::from_callbacks(
            m.0,
            move |x: &DVector<f64>| {
                let ud = ld;
                log_density(x.as_ptr(), x.len(), ud.0)
            },
            move |x: &DVector<f64>| {
                let ud = gd;
                let mut g = DVector::zeros(x.len());
                gradient(x.as_ptr(), x.len(), g.as_mut_ptr(), ud.0);
                g
            },
        );
        emit(out, GeomcTarget(t))
    })
}

/// Log density at `x` (length `d·s`), up to the target's normalising constant.
///
/// # Safety
/// `x` must point to `x_len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn geomc_target_log_density(
    t: *const GeomcTarget,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
) -> GeomcStatus {
    guard(|| {
        let t = deref!(t, "target");
        let x = input!(x, x_len, "x");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        let point = try_core!(t.0.manifold().point(DVector::from_column_slice(x)));
        *out = try_core!(t.0.log_density(&point));
        GeomcStatus::Ok
    })
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn geomc_target_free(t: *mut GeomcTarget) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn geomc_mass_new_identity(out: *mut *mut GeomcMass) -> GeomcStatus {
    guard(|| {
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        emit(out, GeomcMass(MassMatrix::Identity))
    })
}

/// # Safety
/// `values` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn geomc_mass_new_diagonal(
    values: *const f64,
    n: usize,
    out: *mut *mut GeomcMass,
) -> GeomcStatus {
    guard(|| {
        let values = input!(values, n, "values");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        emit(
            out,
            GeomcMass(try_core!(MassMatrix::diagonal(DVector::from_column_slice(values)))),
        )
    })
}

/// Dense symmetric PSD mass; `values` is `n×n` column-major.
///
/// # Safety
/// `values` must point to `n·n` doubles.
#[no_mangle]
pub unsafe extern "C" fn geomc_mass_new_dense(values: *const f64, n: usize, out: *mut *mut GeomcMass) -> GeomcStatus {
    guard(|| {
        let values = input!(values, n * n, "values");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        emit(
            out,
            GeomcMass(try_core!(MassMatrix::dense(DMatrix::from_column_slice(n, n, values)))),
        )
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn geomc_mass_free(m: *mut GeomcMass) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[no_mangle]
pub extern "C" fn geomc_chain_config_default() -> GeomcChainConfig {
    let c = ChainConfig::default();
    GeomcChainConfig {
        variant: match c.variant {
            Variant::Momentum => GeomcVariant::Momentum,
            Variant::Velocity => GeomcVariant::Velocity,
            Variant::Classic => GeomcVariant::Classic,
        },
        epsilon: c.epsilon,
        n_leapfrog: c.n_leapfrog,
        n_samples: c.n_samples,
        n_burnin: c.n_burnin,
        thin: c.thin,
        seed: c.seed,
        sign_convention: match c.sign_convention {
            SignConvention::AsWritten => GeomcSignConvention::AsWritten,
            SignConvention::GradientConsistent => GeomcSignConvention::GradientConsistent,
        },
        reproject: c.reproject_each_step as u8,
        max_drift: c.max_drift,
    }
}

impl From<&GeomcChainConfig> for ChainConfig {
    fn from(c: &GeomcChainConfig) -> Self {
        ChainConfig {
            variant: match c.variant {
                GeomcVariant::Momentum => Variant::Momentum,
                GeomcVariant::Velocity => Variant::Velocity,
                GeomcVariant::Classic => Variant::Classic,
            },
            epsilon: c.epsilon,
            n_leapfrog: c.n_leapfrog,
            n_samples: c.n_samples,
            n_burnin: c.n_burnin,
            thin: c.thin,
            seed: c.seed,
            sign_convention: match c.sign_convention {
                GeomcSignConvention::AsWritten => SignConvention::AsWritten,
                GeomcSignConvention::GradientConsistent => SignConvention::GradientConsistent,
            },
            reproject_each_step: c.reproject != 0,
            max_drift: c.max_drift,
        }
    }
}

/// Runs one chain from `x0` on RNG stream `stream`. Chains with the same
/// config, seed and stream produce identical output.
///
/// # Safety
/// Handles must be live, `x0` must point to `x0_len` doubles and `out` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn geomc_chain_run(
    config: *const GeomcChainConfig,
    target: *const GeomcTarget,
    mass: *const GeomcMass,
    x0: *const f64,
    x0_len: usize,
    stream: u64,
    out: *mut *mut GeomcChain,
) -> GeomcStatus {
    guard(|| {
        let config = deref!(config, "config");
        let target = deref!(target, "target");
        let mass = deref!(mass, "mass");
        let x0 = input!(x0, x0_len, "x0");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        let manifold = target.0.manifold();
        let start = try_core!(manifold.point(DVector::from_column_slice(x0)));
        let output = try_core!(run_chain_on_stream(&config.into(), &target.0, &mass.0, &start, stream));
        emit(
            out,
            GeomcChain {
                dim: manifold.ambient_dim(),
                output,
            },
        )
    })
}

/// Number of retained samples, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn geomc_chain_len(c: *const GeomcChain) -> usize {
    c.as_ref().map_or(0, |c| c.output.len())
}

/// Coordinates per sample, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn geomc_chain_dim(c: *const GeomcChain) -> usize {
    c.as_ref().map_or(0, |c| c.dim)
}

/// # Safety
/// `c` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn geomc_chain_acceptance_rate(c: *const GeomcChain, out: *mut f64) -> GeomcStatus {
    guard(|| {
        let c = deref!(c, "chain");
        if out.is_null() {
            return fail(GeomcStatus::NullPointer, "out is null");
        }
        *out = c.output.acceptance_rate();
        GeomcStatus::Ok
    })
}

/// Copies the samples into `buf`, one sample after another (`len × dim`).
///
/// # Safety
/// `buf` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn geomc_chain_samples(c: *const GeomcChain, buf: *mut f64, capacity: usize) -> GeomcStatus {
    guard(|| {
        let c = deref!(c, "chain");
        let need = c.output.len() * c.dim;
        if capacity < need {
            return fail(
                GeomcStatus::BufferTooSmall,
                format!("need {need} doubles, got {capacity}"),
            );
        }
        if need == 0 {
            return GeomcStatus::Ok;
        }
        if buf.is_null() {
            return fail(GeomcStatus::NullPointer, "buf is null");
        }
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (chunk, s) in dst.chunks_exact_mut(c.dim).zip(&c.output.samples) {
            chunk.copy_from_slice(s.as_slice());
        }
        GeomcStatus::Ok
    })
}

/// Per-sample energy at the start of the transition, energy of the proposal
/// and acceptance flag. Any output pointer may be null to skip it; the
/// others need room for `geomc_chain_len` entries.
///
/// # Safety
/// Non-null buffers must have room for `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn geomc_chain_records(
    c: *const GeomcChain,
    energy: *mut f64,
    proposed_energy: *mut f64,
    accepted: *mut u8,
    capacity: usize,
) -> GeomcStatus {
    guard(|| {
        let c = deref!(c, "chain");
        let n = c.output.records.len();
        if capacity < n {
            return fail(GeomcStatus::BufferTooSmall, format!("need {n} entries, got {capacity}"));
        }
        for (i, r) in c.output.records.iter().enumerate() {
            if !energy.is_null() {
                *energy.add(i) = r.energy;
            }
            if !proposed_energy.is_null() {
                *proposed_energy.add(i) = r.proposed_energy;
            }
            if !accepted.is_null() {
                *accepted.add(i) = r.accepted as u8;
            }
        }
        GeomcStatus::Ok
    })
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn geomc_chain_free(c: *mut GeomcChain) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
