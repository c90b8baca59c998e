//! C interface to the `qshoot` solvers.
//!
//! Problems and solutions are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible entry point
//! returns a [`QsStatus`]; on failure [`qs_last_error`] describes the cause
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use qshoot::coupled::{CoupledError, CoupledProblem, CoupledShooter};
use qshoot::plugin::load_with_manifest_file;
use qshoot::potentials::{potential_from_plugin, MatrixPotentialSpec, PotentialError, PotentialSpec};
use qshoot::radial::RadialMesh;
use qshoot::search::{SearchError, ShootingConfig};
use qshoot::shooting::{default_mesh, Shooter, ShootingError, ShootingProblem};

/// Result of a call. The numeric values match the command-line exit codes
/// where the two overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    Ok = 0,
    InvalidArgument = 1,
    NoEigenvalue = 2,
    Plugin = 3,
    Numerical = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Energy scan and bisection settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QsConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub scan_step: f64,
    pub bisect_tol: f64,
    pub max_bisect: usize,
}

impl From<QsConfig> for ShootingConfig {
    fn from(c: QsConfig) -> Self {
        ShootingConfig::new(c.e_min, c.e_max)
            .with_scan_step(c.scan_step)
            .with_bisect_tol(c.bisect_tol)
            .with_max_bisect(c.max_bisect)
    }
}

/// A single-channel radial problem.
pub struct QsProblem {
    inner: ShootingProblem,
}

/// An eigenvalue with its wavefunction, one column per channel.
pub struct QsSolution {
    n: usize,
    energy: f64,
    radii: Vec<f64>,
    components: Vec<Vec<f64>>,
    mixing: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(QsStatus, String);

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure(QsStatus::InvalidArgument, message.into())
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        let status = match e {
            SearchError::InvalidConfig(_) => QsStatus::InvalidArgument,
            SearchError::NotBracketed { .. } => QsStatus::NoEigenvalue,
            SearchError::NoConvergence { .. } => QsStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<PotentialError> for Failure {
    fn from(e: PotentialError) -> Self {
        let status = match e {
            PotentialError::Plugin(_) => QsStatus::Plugin,
            _ => QsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<ShootingError> for Failure {
    fn from(e: ShootingError) -> Self {
        match e {
            ShootingError::Search(s) => s.into(),
            ShootingError::Potential(p) => p.into(),
            ShootingError::InvalidProblem(_) => Failure::invalid(e.to_string()),
            _ => Failure(QsStatus::Numerical, e.to_string()),
        }
    }
}

impl From<CoupledError> for Failure {
    fn from(e: CoupledError) -> Self {
        match e {
            CoupledError::Search(s) => s.into(),
            CoupledError::Potential(p) => p.into(),
            CoupledError::InvalidProblem(_) => Failure::invalid(e.to_string()),
            _ => Failure(QsStatus::Numerical, e.to_string()),
        }
    }
}

/// Runs `body`, converting errors and panics into a status and the
/// thread's last-error message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> QsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QsStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QsStatus::Panic
        }
    }
}

unsafe fn out_ptr<'a, T>(out: *mut *mut T) -> Result<&'a mut *mut T, Failure> {
    if out.is_null() {
        return Err(Failure(QsStatus::NullPointer, "output pointer is null".into()));
    }
    *out = ptr::null_mut();
    Ok(&mut *out)
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(QsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure(QsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure::invalid(format!("{what} is not UTF-8")))
}

fn mesh(r_min: f64, r_max: f64, points: usize) -> Result<RadialMesh, Failure> {
    RadialMesh::new(r_min, r_max, points).map_err(|e| Failure::invalid(e.to_string()))
}

fn new_problem(potential: PotentialSpec, l: u32, mass: f64, out: &mut *mut QsProblem) -> Result<(), Failure> {
    let inner = ShootingProblem::with_default_mesh(potential, l, mass)?;
    *out = Box::into_raw(Box::new(QsProblem { inner }));
    Ok(())
}

/// Default scan settings over `[e_min, e_max]`.
#[no_mangle]
pub extern "C" fn qs_config_default(e_min: f64, e_max: f64) -> QsConfig {
    let c = ShootingConfig::new(e_min, e_max);
    QsConfig {
        e_min: c.e_min,
        e_max: c.e_max,
        scan_step: c.scan_step,
        bisect_tol: c.bisect_tol,
        max_bisect: c.max_bisect,
    }
}

/// Message for the most recent failure on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Cornell potential `a/r + k r` with the default mesh.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn qs_problem_new_cornell(
    a: f64,
    k: f64,
    l: u32,
    mass: f64,
    out: *mut *mut QsProblem,
) -> QsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        new_problem(PotentialSpec::cornell(a, k)?, l, mass, out)
    })
}

/// Power law `coefficient · r^exponent` with the default mesh.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn qs_problem_new_power(
    coefficient: f64,
    exponent: f64,
    l: u32,
    mass: f64,
    out: *mut *mut QsProblem,
) -> QsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        new_problem(PotentialSpec::power(coefficient, exponent)?, l, mass, out)
    })
}

/// Potential supplied by a plugin library described by `manifest`.
/// `library` and `function` may be null when the manifest names the library
/// and declares exactly one function.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qs_problem_new_plugin(
    library: *const c_char,
    manifest: *const c_char,
    function: *const c_char,
    l: u32,
    mass: f64,
    out: *mut *mut QsProblem,
) -> QsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let manifest = path_arg(manifest, "manifest")?;
        let library = if library.is_null() { None } else { Some(path_arg(library, "library")?) };
        let plugin = load_with_manifest_file(library, manifest).map_err(|e| Failure(QsStatus::Plugin, e.to_string()))?;
        let name = if function.is_null() {
            let names: Vec<&str> = plugin.function_names().collect();
            match names.as_slice() {
                [only] => (*only).to_owned(),
                _ => return Err(Failure::invalid("manifest declares several functions; pass `function`")),
            }
        } else {
            path_arg(function, "function")?.to_string_lossy().into_owned()
        };
        let potential =
            potential_from_plugin(Arc::new(plugin), &name).map_err(|e| Failure(QsStatus::Plugin, e.to_string()))?;
        new_problem(potential, l, mass, out)
    })
}

/// Replaces the mesh of `problem`.
///
/// # Safety
/// `problem` must be a live handle from a `qs_problem_new_*` call.
#[no_mangle]
pub unsafe extern "C" fn qs_problem_set_mesh(problem: *mut QsProblem, r_min: f64, r_max: f64, points: usize) -> QsStatus {
    guard(|| {
        let p = problem
            .as_mut()
            .ok_or_else(|| Failure(QsStatus::NullPointer, "problem is null".into()))?;
        let m = mesh(r_min, r_max, points)?;
        p.inner = ShootingProblem::new(p.inner.potential.clone(), p.inner.l, p.inner.mass, m)?;
        Ok(())
    })
}

/// Resets the mesh of `problem` to the default for its potential.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_problem_use_default_mesh(problem: *mut QsProblem) -> QsStatus {
    guard(|| {
        let p = problem
            .as_mut()
            .ok_or_else(|| Failure(QsStatus::NullPointer, "problem is null".into()))?;
        p.inner.mesh = default_mesh(&p.inner.potential, p.inner.mass)?;
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_problem_free(problem: *mut QsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Bound state with `n` nodes.
///
/// # Safety
/// `problem` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_solve(
    problem: *const QsProblem,
    config: *const QsConfig,
    n: usize,
    out: *mut *mut QsSolution,
) -> QsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let p = &borrow(problem, "problem")?.inner;
        let cfg: ShootingConfig = (*borrow(config, "config")?).into();
        let sol = Shooter::new(p)?.solve(&cfg, n)?;
        *out = Box::into_raw(Box::new(QsSolution {
            n: sol.n,
            energy: sol.energy,
            radii: p.mesh.radii(),
            components: vec![sol.wavefunction.values().to_vec()],
            mixing: vec![1.0],
        }));
        Ok(())
    })
}

/// Bound state `n` of the two-channel logarithmic hybrid potential on the
/// mesh `(r_min, r_max, points)`.
///
/// # Safety
/// `config` must be valid; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn qs_solve_hybrid_log(
    a0: f64,
    b0: f64,
    a1: f64,
    b1: f64,
    l: u32,
    mass: f64,
    r_min: f64,
    r_max: f64,
    points: usize,
    config: *const QsConfig,
    n: usize,
    out: *mut *mut QsSolution,
) -> QsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let cfg: ShootingConfig = (*borrow(config, "config")?).into();
        let spec = MatrixPotentialSpec::hybrid_log(a0, b0, a1, b1, l, mass)?;
        let m = mesh(r_min, r_max, points)?;
        let problem = CoupledProblem::new(spec, l, mass, m)?;
        let sol = CoupledShooter::new(&problem)?.solve(&cfg, n)?;
        *out = Box::into_raw(Box::new(QsSolution {
            n: sol.n,
            energy: sol.energy,
            radii: m.radii(),
            components: sol.components.iter().map(|c| c.values().to_vec()).collect(),
            mixing: sol.mixing,
        }));
        Ok(())
    })
}

/// Eigenvalue, or NaN for a null handle.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_solution_energy(solution: *const QsSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.energy)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_solution_nodes(solution: *const QsSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.n)
}

/// Number of mesh points, or 0 for a null handle.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_solution_len(solution: *const QsSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.radii.len())
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_solution_channels(solution: *const QsSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.components.len())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(Failure(QsStatus::NullPointer, "buffer is null".into()));
    }
    if len < src.len() {
        return Err(Failure(
            QsStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the mesh radii into `buf`, which must hold `qs_solution_len`
/// values.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_solution_radii(solution: *const QsSolution, buf: *mut f64, len: usize) -> QsStatus {
    guard(|| copy_out(&borrow(solution, "solution")?.radii, buf, len))
}

/// Copies channel `channel` of the normalized wavefunction into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_solution_values(
    solution: *const QsSolution,
    channel: usize,
    buf: *mut f64,
    len: usize,
) -> QsStatus {
    guard(|| {
        let s = borrow(solution, "solution")?;
        let c = s
            .components
            .get(channel)
            .ok_or_else(|| Failure::invalid(format!("channel {channel} out of range ({})", s.components.len())))?;
        copy_out(c, buf, len)
    })
}

/// Copies the channel mixing vector, `qs_solution_channels` values.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_solution_mixing(solution: *const QsSolution, buf: *mut f64, len: usize) -> QsStatus {
    guard(|| copy_out(&borrow(solution, "solution")?.mixing, buf, len))
}

/// # Safety
/// `solution` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_solution_free(solution: *mut QsSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}
