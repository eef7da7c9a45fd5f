//! C ABI over `qstokes`.
//!
//! Every entry point returns a [`QsStatus`]; on failure the message is kept
//! per thread and read back with [`qs_last_error`]. Objects are opaque and
//! owned by the caller once created: free them with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use qstokes::invariants;
use qstokes::laurent::{LaurentWindow, NumericContext, DEFAULT_TOL_ABS, DEFAULT_TOL_REL};
use qstokes::linalg::CMat;
use qstokes::qmodule::TwoSlopeModule;
use qstokes::special;
use qstokes::summation::{SummationResult, Summator};
use qstokes::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsComplex {
    pub re: f64,
    pub im: f64,
}

impl From<QsComplex> for Complex64 {
    fn from(z: QsComplex) -> Self {
        Complex64::new(z.re, z.im)
    }
}

impl From<Complex64> for QsComplex {
    fn from(z: Complex64) -> Self {
        QsComplex { re: z.re, im: z.im }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    Ok = 0,
    NullPointer = 1,
    BufferTooSmall = 2,
    InvalidContext = 3,
    ContextMismatch = 4,
    Dimension = 5,
    ZeroArgument = 6,
    NumericallyZero = 7,
    Pole = 8,
    Singular = 9,
    Resonant = 10,
    Unsupported = 11,
    ForbiddenDirection = 12,
    Divergence = 13,
    Contour = 14,
    NotASection = 15,
    RootCount = 16,
    Panic = 17,
}

impl From<&Error> for QsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidContext(_) => QsStatus::InvalidContext,
            Error::ContextMismatch => QsStatus::ContextMismatch,
            Error::Dimension(_) => QsStatus::Dimension,
            Error::ZeroArgument(_) => QsStatus::ZeroArgument,
            Error::NumericallyZero => QsStatus::NumericallyZero,
            Error::Pole { .. } => QsStatus::Pole,
            Error::Singular(_) => QsStatus::Singular,
            Error::Resonant { .. } => QsStatus::Resonant,
            Error::Unsupported(_) => QsStatus::Unsupported,
            Error::ForbiddenDirection { .. } => QsStatus::ForbiddenDirection,
            Error::Divergence(_) => QsStatus::Divergence,
            Error::Contour(_) => QsStatus::Contour,
            Error::NotASection { .. } => QsStatus::NotASection,
            Error::RootCount(_) => QsStatus::RootCount,
        }
    }
}

/// Numeric context: modulus `q` and the coefficient window.
pub struct QsContext(NumericContext);

/// A two-slope module `(d, A, U)`.
pub struct QsModule(TwoSlopeModule);

/// The summed gauge `F_c̄` of a module in one direction.
pub struct QsSummation(SummationResult);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Lib(Error),
    Status(QsStatus, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(QsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, records any error or panic, and maps it to a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> QsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            QsStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            QsStatus::from(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            QsStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `values` into `out[..cap]`; `len` always receives the full count.
unsafe fn write_vec(values: &[Complex64], out: *mut QsComplex, cap: usize, len: *mut usize) -> Result<(), Failure> {
    *out_ref(len, "len")? = values.len();
    if cap < values.len() {
        return Err(Failure::Status(
            QsStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    for (k, v) in values.iter().enumerate() {
        *out.add(k) = (*v).into();
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qs_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the length the full
/// message needs, including the terminator. Empty after a success.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn qs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// `θ_q(z) = Σ q^{-n(n+1)/2} zⁿ`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_theta(q: QsComplex, z: QsComplex, out: *mut QsComplex) -> QsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = special::theta_series(q.into(), z.into())?.into();
        Ok(())
    })
}

/// `θ_q(z)` by the Jacobi triple product.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_theta_triple(q: QsComplex, z: QsComplex, out: *mut QsComplex) -> QsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = special::theta_triple(q.into(), z.into())?.into();
        Ok(())
    })
}

/// The q-character `e_{q,a}(z) = θ_q(z) / θ_q(z/a)`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_e_qa(q: QsComplex, z: QsComplex, a: QsComplex, out: *mut QsComplex) -> QsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = special::e_qa(q.into(), z.into(), a.into())?.into();
        Ok(())
    })
}

/// Creates a context with modulus `q`, window `[-window, window]` and the
/// default tolerances.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_context_new(q: QsComplex, window: i64, out: *mut *mut QsContext) -> QsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ctx = NumericContext::new(q.into(), -window, window, DEFAULT_TOL_REL, DEFAULT_TOL_ABS)?;
        *out = Box::into_raw(Box::new(QsContext(ctx)));
        Ok(())
    })
}

/// # Safety
/// `ctx` must be null or come from [`qs_context_new`], and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qs_context_free(ctx: *mut QsContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Builds the module `σ_q Y = [[z^{-d} A, U], [0, 1]] Y` of rank `r`.
///
/// `a` holds `A` row-major (`r·r` values). `u` holds the `r` components of
/// `U` one after another, each as `u_len` coefficients starting at `z^{u_start}`.
///
/// # Safety
/// `ctx` must be a live context; `a` and `u` must hold the stated counts;
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_module_new(
    ctx: *const QsContext,
    d: u32,
    r: usize,
    a: *const QsComplex,
    u_start: i64,
    u_len: usize,
    u: *const QsComplex,
    out: *mut *mut QsModule,
) -> QsStatus {
    guard(|| {
        let ctx = &in_ref(ctx, "ctx")?.0;
        let out = out_ref(out, "out")?;
        let a = in_slice(a, r * r, "a")?;
        let u = in_slice(u, r * u_len, "u")?;
        let am = CMat::from_fn(r, r, |i, k| a[i * r + k].into());
        let comps = (0..r)
            .map(|i| {
                let cs: Vec<Complex64> = u[i * u_len..(i + 1) * u_len].iter().map(|&z| z.into()).collect();
                LaurentWindow::from_coeffs(ctx, u_start, &cs)
            })
            .collect::<qstokes::Result<Vec<_>>>()?;
        *out = Box::into_raw(Box::new(QsModule(TwoSlopeModule::new(d, am, comps)?)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or come from [`qs_module_new`], and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qs_module_free(m: *mut QsModule) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Rank `r` of the module, 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live module.
#[no_mangle]
pub unsafe extern "C" fn qs_module_rank(m: *const QsModule) -> usize {
    m.as_ref().map_or(0, |m| m.0.rank())
}

/// The `r·d` q-Borel invariants, grouped by root of unity `j`.
///
/// # Safety
/// `m` must be a live module, `out` valid for `cap` values, `len` for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_borel_invariants(m: *const QsModule, out: *mut QsComplex, cap: usize, len: *mut usize) -> QsStatus {
    guard(|| {
        let m = &in_ref(m, "module")?.0;
        write_vec(&invariants::borel_invariants(m)?.flatten(), out, cap, len)
    })
}

/// The `r·d` Serre-duality pairings, in the order of [`qs_borel_invariants`].
///
/// # Safety
/// As for [`qs_borel_invariants`].
#[no_mangle]
pub unsafe extern "C" fn qs_serre_invariants(m: *const QsModule, out: *mut QsComplex, cap: usize, len: *mut usize) -> QsStatus {
    guard(|| {
        let m = &in_ref(m, "module")?.0;
        write_vec(&invariants::serre_invariants(m)?.flatten(), out, cap, len)
    })
}

/// `min |c^d qⁿ − λ| / ‖A‖`; directions below `1e-8` are forbidden.
///
/// # Safety
/// `m` must be a live module and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_forbidden_gap(m: *const QsModule, c: QsComplex, out: *mut f64) -> QsStatus {
    guard(|| {
        let m = &in_ref(m, "module")?.0;
        let out = out_ref(out, "out")?;
        *out = Summator::new(m)?.gap(c.into());
        Ok(())
    })
}

/// Sums the gauge transformation in the direction of `c`.
///
/// # Safety
/// `m` must be a live module and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_sum(m: *const QsModule, c: QsComplex, out: *mut *mut QsSummation) -> QsStatus {
    guard(|| {
        let m = &in_ref(m, "module")?.0;
        let out = out_ref(out, "out")?;
        let s = Summator::new(m)?.sum_at(c.into())?;
        *out = Box::into_raw(Box::new(QsSummation(s)));
        Ok(())
    })
}

/// `F_c̄(z)`, `r` values.
///
/// # Safety
/// `s` must be a live summation, `out` valid for `cap` values, `len` for one write.
#[no_mangle]
pub unsafe extern "C" fn qs_summation_eval(
    s: *const QsSummation,
    z: QsComplex,
    out: *mut QsComplex,
    cap: usize,
    len: *mut usize,
) -> QsStatus {
    guard(|| {
        let s = &in_ref(s, "summation")?.0;
        let v: Vec<Complex64> = s.eval(z.into())?.iter().cloned().collect();
        write_vec(&v, out, cap, len)
    })
}

/// # Safety
/// `s` must be null or come from [`qs_sum`], and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qs_summation_free(s: *mut QsSummation) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_follows_error_kind() {
        let e = Error::ForbiddenDirection { nearest: Complex64::new(1.0, 0.0) };
        assert_eq!(QsStatus::from(&e), QsStatus::ForbiddenDirection);
        assert_eq!(QsStatus::from(&Error::ContextMismatch), QsStatus::ContextMismatch);
    }

    #[test]
    fn panics_become_a_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, QsStatus::Panic);
        let n = unsafe { qs_last_error(ptr::null_mut(), 0) };
        assert_eq!(n, "internal error: boom".len() + 1);
    }

    #[test]
    fn short_buffers_report_the_needed_length() {
        let vals = [Complex64::new(1.0, 2.0); 3];
        let mut out = [QsComplex { re: 0.0, im: 0.0 }; 3];
        let mut len = 0;
        let r = unsafe { write_vec(&vals, out.as_mut_ptr(), 2, &mut len) };
        assert!(matches!(r, Err(Failure::Status(QsStatus::BufferTooSmall, _))));
        assert_eq!(len, 3);
        assert!(unsafe { write_vec(&vals, out.as_mut_ptr(), 3, &mut len) }.is_ok());
        assert_eq!(out[2], QsComplex { re: 1.0, im: 2.0 });
    }
}
