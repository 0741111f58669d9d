//! C ABI over the diracsol library.
//!
//! Every entry point returns a [`DsStatus`]; on failure the message is
//! available from [`ds_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.
//!
//! All entry points are `unsafe`: pointer arguments must be null or valid for
//! the documented number of elements, and handles must come from this
//! library and not be used after they are freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use diracsol::coupled_dynamics::{hamiltonian, transversal_norm, Integrator};
use diracsol::field_grid::{GridSpec, Repr};
use diracsol::linearized_spectral::SpectralContext;
use diracsol::soliton_manifold::{soliton_state, velocity_of_momentum, SolitonParams};
use diracsol::spinor_algebra::ChargeDensity;
use diracsol::symplectic_geometry::{project_to_manifold, PhaseState, ProjectionOptions};
use diracsol::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    Invalid = 2,
    Numerical = 3,
    Acceptance = 4,
    Io = 5,
    Panic = 6,
}

/// Charge density ρ = (ρ₁, 0, 0, 0), ρ₁ a Gaussian of width `sigma`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DsCharge {
    pub amplitude: f64,
    pub sigma: f64,
    pub mass: f64,
}

/// A phase-space state together with its charge density and integrator.
pub struct DsSimulation {
    rho: ChargeDensity,
    state: PhaseState,
    integrator: Option<Integrator>,
    time: f64,
}

/// Spectral matrices at fixed |v|.
pub struct DsSpectral {
    ctx: SpectralContext,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DsStatus {
    match e.exit_code() {
        3 => DsStatus::Numerical,
        4 => DsStatus::Acceptance,
        _ if matches!(e, Error::Io(_)) => DsStatus::Io,
        _ => DsStatus::Invalid,
    }
}

fn guard(f: impl FnOnce() -> Result<(), DsStatus>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside diracsol".into());
            DsStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, DsStatus>;
}

impl<T> OrStatus<T> for diracsol::Result<T> {
    fn or_status(self) -> Result<T, DsStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn non_null<'a, T>(p: *const T) -> Result<&'a T, DsStatus> {
    // SAFETY: callers pass either null or a pointer obtained from this library.
    unsafe { p.as_ref() }.ok_or_else(|| {
        set_error("null pointer".into());
        DsStatus::NullPointer
    })
}

fn non_null_mut<'a, T>(p: *mut T) -> Result<&'a mut T, DsStatus> {
    // SAFETY: as in `non_null`; the caller guarantees exclusive access.
    unsafe { p.as_mut() }.ok_or_else(|| {
        set_error("null pointer".into());
        DsStatus::NullPointer
    })
}

fn read3(p: *const f64) -> Result<[f64; 3], DsStatus> {
    non_null(p)?;
    // SAFETY: non-null and documented to point at three doubles.
    Ok(unsafe { [*p, *p.add(1), *p.add(2)] })
}

fn write_n(p: *mut f64, vals: &[f64]) -> Result<(), DsStatus> {
    non_null_mut(p)?;
    // SAFETY: non-null and documented to hold `vals.len()` doubles.
    unsafe { std::ptr::copy_nonoverlapping(vals.as_ptr(), p, vals.len()) };
    Ok(())
}

fn charge(c: DsCharge) -> Result<ChargeDensity, DsStatus> {
    ChargeDensity::new(c.amplitude, c.sigma, c.mass).or_status()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length.
#[no_mangle]
pub unsafe extern "C" fn ds_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: buf holds at least `len` bytes by contract.
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Soliton state S(b, v) on an N³ grid of side L. `b` and `v` point at three
/// doubles each.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_new_soliton(
    box_length: f64,
    n: usize,
    rho: DsCharge,
    b: *const f64,
    v: *const f64,
    out: *mut *mut DsSimulation,
) -> DsStatus {
    guard(|| {
        let out = non_null_mut(out)?;
        let rho = charge(rho)?;
        let grid = GridSpec::new(box_length, n).or_status()?;
        let sigma = SolitonParams::new(read3(b)?, read3(v)?).or_status()?;
        let state = soliton_state(&sigma, &rho, grid).or_status()?;
        *out = Box::into_raw(Box::new(DsSimulation { rho, state, integrator: None, time: 0.0 }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_simulation_free(sim: *mut DsSimulation) {
    if !sim.is_null() {
        // SAFETY: created by Box::into_raw in this library and freed once.
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Advances `steps` steps of size `dt`.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_step(sim: *mut DsSimulation, dt: f64, steps: usize) -> DsStatus {
    guard(|| {
        let sim = non_null_mut(sim)?;
        let grid = *sim.state.psi.grid();
        if sim.integrator.as_ref().map(|i| i.dt) != Some(dt) {
            sim.integrator = Some(Integrator::new(sim.rho, grid, dt).or_status()?);
        }
        if sim.state.psi.repr() != Repr::Fourier {
            sim.state = sim.state.to_fourier();
        }
        let integ = sim.integrator.as_mut().expect("integrator set above");
        for _ in 0..steps {
            integ.step(&mut sim.state).or_status()?;
            sim.time += dt;
        }
        Ok(())
    })
}

/// Elapsed time, particle position and momentum (`q`, `p` hold three doubles).
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_particle(sim: *const DsSimulation, t: *mut f64, q: *mut f64, p: *mut f64) -> DsStatus {
    guard(|| {
        let sim = non_null(sim)?;
        write_n(t, &[sim.time])?;
        write_n(q, &sim.state.q)?;
        write_n(p, &sim.state.p)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_simulation_hamiltonian(sim: *const DsSimulation, out: *mut f64) -> DsStatus {
    guard(|| {
        let sim = non_null(sim)?;
        let h = hamiltonian(&sim.state, &sim.rho).or_status()?;
        write_n(out, &[h])
    })
}

/// Symplectic projection onto the solitary manifold. Writes σ = (b, v) into
/// `sigma` (six doubles) and ‖Z‖_{−ν} + |Q| + |P| into `z_norm`.
#[no_mangle]
pub unsafe extern "C" fn ds_simulation_project(sim: *const DsSimulation, nu: f64, sigma: *mut f64, z_norm: *mut f64) -> DsStatus {
    guard(|| {
        let sim = non_null(sim)?;
        let y = &sim.state;
        let guess = SolitonParams::new(y.q, velocity_of_momentum(y.p)).or_status()?;
        let pr = project_to_manifold(y, &guess, &sim.rho, &ProjectionOptions::default()).or_status()?;
        let zn = transversal_norm(&pr.z, nu, pr.sigma.b).or_status()?;
        write_n(sigma, &pr.sigma.as_array())?;
        write_n(z_norm, &[zn])
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_spectral_new(speed: f64, rho: DsCharge, out: *mut *mut DsSpectral) -> DsStatus {
    guard(|| {
        let out = non_null_mut(out)?;
        let ctx = SpectralContext::with_defaults(speed, charge(rho)?).or_status()?;
        *out = Box::into_raw(Box::new(DsSpectral { ctx }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_spectral_free(s: *mut DsSpectral) {
    if !s.is_null() {
        // SAFETY: created by Box::into_raw in this library and freed once.
        drop(unsafe { Box::from_raw(s) });
    }
}

/// det M(iω + 0), computed directly and from the factorized form. Each output
/// holds two doubles (re, im).
#[no_mangle]
pub unsafe extern "C" fn ds_spectral_det(s: *const DsSpectral, omega: f64, direct: *mut f64, factorized: *mut f64) -> DsStatus {
    guard(|| {
        let s = non_null(s)?;
        if !omega.is_finite() {
            set_error("omega must be finite".into());
            return Err(DsStatus::Invalid);
        }
        let d = s.ctx.det_sample(omega);
        write_n(direct, &[d.det_direct.re, d.det_direct.im])?;
        write_n(factorized, &[d.det_factorized.re, d.det_factorized.im])
    })
}

/// Branch point μ = m√(1 − v²).
#[no_mangle]
pub unsafe extern "C" fn ds_spectral_mu(s: *const DsSpectral, out: *mut f64) -> DsStatus {
    guard(|| {
        let s = non_null(s)?;
        write_n(out, &[s.ctx.mu()])
    })
}
