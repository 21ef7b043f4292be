//! C ABI over `circmap`.
//!
//! Parameter sets are opaque heap handles created by the `cm_params_*`
//! constructors and released with [`cm_params_free`]. Every function returns
//! a [`CmStatus`]; on failure the message is kept per thread and can be read
//! with [`cm_last_error`]. Results are written through out-pointers, which
//! are left untouched on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use circmap::dynamics::lyapunov_estimate;
use circmap::map::critical_point;
use circmap::measure::srb_density;
use circmap::partition::{
    binding_period_interval, default_cap, s_threshold, DEFAULT_BINDING_SAMPLES,
};
use circmap::scan::{default_m_hat, evaluate};
use circmap::{Error, MapParams, ParamSpec};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    Config = 3,
    Precondition = 4,
    SingularOrbit = 5,
    SingularPoint = 6,
    CapReached = 7,
    Numeric = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmSuite {
    Beta1 = 1,
    Beta3 = 3,
}

/// Opaque parameter set.
pub struct CmParams {
    inner: MapParams,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CmStatus {
    match e {
        Error::InvalidParams(_) | Error::IndexOutOfRange { .. } | Error::InvalidIndex(_) => {
            CmStatus::InvalidParams
        }
        Error::Config(_) | Error::Io(_) => CmStatus::Config,
        Error::Precondition(_) | Error::EmptyGrid | Error::BinMismatch(..) => {
            CmStatus::Precondition
        }
        Error::SingularOrbit { .. } | Error::AllOrbitsSingular => CmStatus::SingularOrbit,
        Error::SingularInput | Error::SingularPoint(_) | Error::BoundaryPoint(_) => {
            CmStatus::SingularPoint
        }
        Error::CapReached { .. } => CmStatus::CapReached,
        Error::DiffeomorphismViolation { .. } => CmStatus::Numeric,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (CmStatus, String)>) -> CmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            CmStatus::Panic
        }
    }
}

fn lib(e: Error) -> (CmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CmStatus, String) {
    (CmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn params_ref<'a>(h: *const CmParams) -> Result<&'a MapParams, (CmStatus, String)> {
    h.as_ref()
        .map(|p| &p.inner)
        .ok_or_else(|| null("params handle"))
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), (CmStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

fn boxed(p: MapParams) -> *mut CmParams {
    Box::into_raw(Box::new(CmParams { inner: p }))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Built-in reference parameters with `mu = 0`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_params_new_suite(suite: CmSuite, out: *mut *mut CmParams) -> CmStatus {
    guard(|| {
        let spec = match suite {
            CmSuite::Beta1 => ParamSpec::reference_beta1(),
            CmSuite::Beta3 => ParamSpec::reference_beta3(),
        };
        let p = spec.build().map_err(lib)?;
        put(out, boxed(p))
    })
}

/// Parameters from flat `key = value` config text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_params_from_config(
    text: *const c_char,
    out: *mut *mut CmParams,
) -> CmStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("config text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| (CmStatus::Config, e.to_string()))?;
        let p = MapParams::from_config_str(s).map_err(lib)?;
        put(out, boxed(p))
    })
}

/// New handle equal to `h` with the parameter shift replaced.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_params_with_mu(
    h: *const CmParams,
    mu: f64,
    out: *mut *mut CmParams,
) -> CmStatus {
    guard(|| {
        let p = params_ref(h)?.with_mu(mu).map_err(lib)?;
        put(out, boxed(p))
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cm_params_free(h: *mut CmParams) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// `eps` of the parameter set.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_params_eps(h: *const CmParams, out: *mut f64) -> CmStatus {
    guard(|| put(out, params_ref(h)?.eps()))
}

/// `f(z)` and `f'(z)` on the circle `[-1, 1)`.
///
/// # Safety
/// `h` must be a live handle; `value` and `deriv` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cm_map_eval(
    h: *const CmParams,
    z: f64,
    value: *mut f64,
    deriv: *mut f64,
) -> CmStatus {
    guard(|| {
        let p = params_ref(h)?;
        if value.is_null() || deriv.is_null() {
            return Err(null("output pointer"));
        }
        let (v, d) = p.step(z).map_err(lib)?;
        put(value, v)?;
        put(deriv, d)
    })
}

/// Position of the critical point `x_k`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_critical_point(h: *const CmParams, k: i64, out: *mut f64) -> CmStatus {
    guard(|| {
        let c = critical_point(params_ref(h)?, k).map_err(lib)?;
        put(out, c.position)
    })
}

/// `(1/n) log |(f^n)'(x0)|`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_lyapunov(
    h: *const CmParams,
    x0: f64,
    n: usize,
    out: *mut f64,
) -> CmStatus {
    guard(|| {
        let v = lyapunov_estimate(params_ref(h)?, x0, n).map_err(lib)?;
        put(out, v)
    })
}

/// Binding period `p(l, s)` with the default cap `50 (|l| + |s|)`; blocks
/// with `|s| <= s(tau)` report 0. A capped block returns `CapReached`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_binding_period(
    h: *const CmParams,
    l: i64,
    s: i64,
    out: *mut usize,
) -> CmStatus {
    guard(|| {
        let p = params_ref(h)?;
        if (s.abs() as f64) <= s_threshold(p) {
            return put(out, 0);
        }
        let v = binding_period_interval(p, l, s, default_cap(l, s), DEFAULT_BINDING_SAMPLES)
            .map_err(lib)?;
        put(out, v)
    })
}

/// Exclusion verdict of the handle's `mu` up to `horizon_n`, with the default
/// `M_hat` and `k_test_max = k0 + 10`. Writes 1 for a survivor, 0 otherwise.
///
/// # Safety
/// `h` must be a live handle and `survived` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_exclusion_verdict(
    h: *const CmParams,
    horizon_n: usize,
    survived: *mut i32,
) -> CmStatus {
    guard(|| {
        let p = params_ref(h)?;
        let kmax = (p.k0() + 10).min(p.k_max());
        let v = evaluate(p, horizon_n, default_m_hat(p), kmax, false).map_err(lib)?;
        put(survived, v.survived as i32)
    })
}

/// Occupation density on `n_bins` equal bins of `[-1, 1)`, averaged over
/// `sample_size` seeded orbits of `n_iter` iterates each. `density` must
/// hold `n_bins` values.
///
/// # Safety
/// `h` must be a live handle and `density` point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn cm_density(
    h: *const CmParams,
    n_iter: usize,
    n_bins: usize,
    sample_size: usize,
    seed: u64,
    density: *mut f64,
    len: usize,
) -> CmStatus {
    guard(|| {
        let p = params_ref(h)?;
        if density.is_null() {
            return Err(null("density buffer"));
        }
        if len < n_bins {
            return Err((
                CmStatus::BufferTooSmall,
                format!("buffer holds {len} of {n_bins} bins"),
            ));
        }
        let hist = srb_density(p, 1000, n_iter, n_bins, sample_size, seed).map_err(lib)?;
        let d = hist.density();
        std::slice::from_raw_parts_mut(density, d.len()).copy_from_slice(&d);
        Ok(())
    })
}
