//! C ABI over `randswitch`.
//!
//! Objects cross the boundary as opaque handles created by `rs_*_new`-style
//! functions and released by the matching `rs_*_free`. Every fallible call
//! returns an [`RsStatus`]; on failure a message is kept per thread and can
//! be fetched with [`rs_last_error`]. Output arrays are caller-allocated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use randswitch::converter::{self, BuckParams, ConverterModel};
use randswitch::dist::PulseLengthDist;
use randswitch::spectrum::{self, PsdCurve};
use randswitch::switching::{self, SwitchPolicy, SwitchSequence};
use randswitch::{rng, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InfeasibleMoments = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Parse = 6,
    Panic = 7,
}

/// Pulse-length distribution.
pub struct RsDist(PulseLengthDist);

/// Generated switching sequence.
pub struct RsSequence(SwitchSequence);

/// Two-topology switched linear converter.
pub struct RsConverter(ConverterModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> RsStatus {
    match e {
        Error::InfeasibleMoments { .. } => RsStatus::InfeasibleMoments,
        Error::Json(_) => RsStatus::Parse,
        e if e.is_numerical() => RsStatus::Numerical,
        _ => RsStatus::InvalidArgument,
    }
}

struct Fail(RsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult = std::result::Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> RsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(RsStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn need(have: usize, want: usize) -> FfiResult {
    if have < want {
        return Err(Fail(
            RsStatus::BufferTooSmall,
            format!("buffer holds {have} values, {want} needed"),
        ));
    }
    Ok(())
}

fn new_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The caller owns
/// the string and releases it with [`rs_string_free`].
#[no_mangle]
pub extern "C" fn rs_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |s| s.clone().into_raw())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a distribution spec such as `huffman:32` or `uniform:1:5`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_dist_parse(spec: *const c_char, out: *mut *mut RsDist) -> RsStatus {
    guard(|| {
        let d: PulseLengthDist = as_str(spec, "spec")?.parse()?;
        put(out, Box::into_raw(Box::new(RsDist(d))), "out")
    })
}

/// Maximum-entropy distribution on `[lmin, lmax]` with moments `l1`, `l2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_dist_canonical(
    l1: f64,
    l2: f64,
    lmin: u32,
    lmax: u32,
    out: *mut *mut RsDist,
) -> RsStatus {
    guard(|| {
        let d = PulseLengthDist::canonical(l1, l2, lmin, lmax)?;
        put(out, Box::into_raw(Box::new(RsDist(d))), "out")
    })
}

/// # Safety
/// `dist` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_dist_moments(
    dist: *const RsDist,
    mean: *mut f64,
    second: *mut f64,
    variance: *mut f64,
) -> RsStatus {
    guard(|| {
        let m = as_ref(dist, "dist")?.0.moments();
        put(mean, m.mean, "mean")?;
        put(second, m.second, "second")?;
        put(variance, m.variance, "variance")
    })
}

/// JSON form of the distribution; release with [`rs_string_free`].
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_dist_to_json(dist: *const RsDist, out: *mut *mut c_char) -> RsStatus {
    guard(|| {
        let json = serde_json::to_string(&as_ref(dist, "dist")?.0).map_err(Error::from)?;
        put(out, new_string(json), "out")
    })
}

/// # Safety
/// `dist` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_dist_free(dist: *mut RsDist) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

unsafe fn write_curve(c: &PsdCurve, noise_out: *mut f64, dc_out: *mut f64) -> FfiResult {
    slice_mut(noise_out, c.len(), "noise_out")?.copy_from_slice(&c.noise);
    if !dc_out.is_null() {
        dc_out.write(c.dc_weight);
    }
    Ok(())
}

/// RS spectrum at `n` frequencies. `noise_out` receives `n` values; the DC
/// weight goes to `dc_out` unless it is NULL.
///
/// # Safety
/// `freqs` and `noise_out` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn rs_psd_rs(
    p: f64,
    l: u32,
    t_eps: f64,
    freqs: *const f64,
    n: usize,
    noise_out: *mut f64,
    dc_out: *mut f64,
) -> RsStatus {
    guard(|| {
        let c = spectrum::psd_rs(p, l, t_eps, slice(freqs, n, "freqs")?)?;
        write_curve(&c, noise_out, dc_out)
    })
}

/// FRS spectrum at `n` frequencies.
///
/// # Safety
/// `dist` must be a live handle; `freqs` and `noise_out` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn rs_psd_frs(
    p: f64,
    dist: *const RsDist,
    t_eps: f64,
    freqs: *const f64,
    n: usize,
    noise_out: *mut f64,
    dc_out: *mut f64,
) -> RsStatus {
    guard(|| {
        let d = &as_ref(dist, "dist")?.0;
        let c = spectrum::psd_frs(p, d, t_eps, slice(freqs, n, "freqs")?)?;
        write_curve(&c, noise_out, dc_out)
    })
}

/// Lorentzian envelope parameters `G` and `w` (rad/s).
///
/// # Safety
/// `dist` must be a live handle; `g` and `w` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_envelope_fit(
    p: f64,
    dist: *const RsDist,
    t_eps: f64,
    g: *mut f64,
    w: *mut f64,
) -> RsStatus {
    guard(|| {
        let fit = spectrum::fit_envelope(p, &as_ref(dist, "dist")?.0, t_eps)?;
        put(g, fit.g, "g")?;
        put(w, fit.w, "w")
    })
}

/// Total power of a sampled spectrum: quadrature, tail estimate and DC weight.
///
/// # Safety
/// `freqs` and `noise` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_total_psd(
    freqs: *const f64,
    noise: *const f64,
    n: usize,
    dc_weight: f64,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let c = PsdCurve::new(
            slice(freqs, n, "freqs")?.to_vec(),
            slice(noise, n, "noise")?.to_vec(),
            dc_weight,
        )?;
        put(out, spectrum::total_psd(&c).value, "out")
    })
}

/// Monte-Carlo periodogram estimate. Points with `|f|` below `*dc_cutoff_out`
/// lie in the finite-record DC lobe.
///
/// # Safety
/// `dist` must be a live handle; `freqs` and `noise_out` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn rs_mc_psd(
    p: f64,
    dist: *const RsDist,
    t_eps: f64,
    n_pulses: usize,
    n_trials: usize,
    seed: u64,
    freqs: *const f64,
    n: usize,
    noise_out: *mut f64,
    dc_cutoff_out: *mut f64,
) -> RsStatus {
    guard(|| {
        let policy = SwitchPolicy::new(p, as_ref(dist, "dist")?.0.clone(), t_eps)?;
        let mc = spectrum::mc_psd_estimate(&policy, n_pulses, n_trials, slice(freqs, n, "freqs")?, seed)?;
        slice_mut(noise_out, n, "noise_out")?.copy_from_slice(&mc.curve.noise);
        if !dc_cutoff_out.is_null() {
            dc_cutoff_out.write(mc.dc_cutoff_hz);
        }
        Ok(())
    })
}

/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_sequence_generate(
    p: f64,
    dist: *const RsDist,
    t_eps: f64,
    n_pulses: usize,
    seed: u64,
    out: *mut *mut RsSequence,
) -> RsStatus {
    guard(|| {
        let policy = SwitchPolicy::new(p, as_ref(dist, "dist")?.0.clone(), t_eps)?;
        let seq = switching::generate(&policy, n_pulses, &mut rng::seeded(seed))?;
        put(out, Box::into_raw(Box::new(RsSequence(seq))), "out")
    })
}

/// # Safety
/// `seq` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_sequence_len(seq: *const RsSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.0.len())
}

/// Copies amplitudes and lengths into buffers of capacity `cap`.
///
/// # Safety
/// `seq` must be a live handle; `amps` and `lens` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn rs_sequence_copy(
    seq: *const RsSequence,
    amps: *mut u8,
    lens: *mut u32,
    cap: usize,
) -> RsStatus {
    guard(|| {
        let s = &as_ref(seq, "seq")?.0;
        need(cap, s.len())?;
        slice_mut(amps, s.len(), "amps")?.copy_from_slice(&s.amps);
        slice_mut(lens, s.len(), "lens")?.copy_from_slice(&s.lens);
        Ok(())
    })
}

/// Turn-on and turn-off counts.
///
/// # Safety
/// `seq` must be a live handle; `on` and `off` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_sequence_transitions(
    seq: *const RsSequence,
    on: *mut u64,
    off: *mut u64,
) -> RsStatus {
    guard(|| {
        let (a, b) = as_ref(seq, "seq")?.0.count_transitions();
        put(on, a, "on")?;
        put(off, b, "off")
    })
}

/// # Safety
/// `seq` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_sequence_free(seq: *mut RsSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Model from JSON, either `{A1, A2, B1, B2, Vg, labels}` or the buck
/// shorthand `{L, C, R, r, Vg}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_converter_from_json(
    json: *const c_char,
    out: *mut *mut RsConverter,
) -> RsStatus {
    guard(|| {
        let m = ConverterModel::from_json(as_str(json, "json")?)?;
        put(out, Box::into_raw(Box::new(RsConverter(m))), "out")
    })
}

/// Buck converter with states `[i_L, v_C]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_converter_buck(
    l: f64,
    c: f64,
    r_load: f64,
    r: f64,
    vg: f64,
    out: *mut *mut RsConverter,
) -> RsStatus {
    guard(|| {
        let m = BuckParams::new(l, c, r_load, r, vg)?.model()?;
        put(out, Box::into_raw(Box::new(RsConverter(m))), "out")
    })
}

/// Number of states; 0 for NULL.
///
/// # Safety
/// `conv` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_converter_dim(conv: *const RsConverter) -> usize {
    conv.as_ref().map_or(0, |c| c.0.dim())
}

/// DC operating point at probability `p` into `x_out` (capacity `cap`).
///
/// # Safety
/// `conv` must be a live handle; `x_out` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn rs_dc_solve(
    conv: *const RsConverter,
    p: f64,
    x_out: *mut f64,
    cap: usize,
) -> RsStatus {
    guard(|| {
        let m = &as_ref(conv, "conv")?.0;
        need(cap, m.dim())?;
        let op = converter::dc_solve(m, p)?;
        slice_mut(x_out, m.dim(), "x_out")?.copy_from_slice(&op.x);
        Ok(())
    })
}

/// Equilibrium pulse-boundary covariance, row-major `dim x dim` into
/// `cov_out` (capacity `cap`); the stationary mean goes to `mean_out`
/// (capacity `dim`) unless it is NULL.
///
/// # Safety
/// `conv` and `dist` must be live handles; buffers must hold the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn rs_covariance(
    conv: *const RsConverter,
    p: f64,
    dist: *const RsDist,
    t_eps: f64,
    cov_out: *mut f64,
    cap: usize,
    mean_out: *mut f64,
) -> RsStatus {
    guard(|| {
        let m = &as_ref(conv, "conv")?.0;
        let d = &as_ref(dist, "dist")?.0;
        let n = m.dim();
        need(cap, n * n)?;
        let cov = converter::covariance_equilibrium(m, p, d, t_eps)?;
        let out = slice_mut(cov_out, n * n, "cov_out")?;
        for (row, dst) in cov.cov.iter().zip(out.chunks_mut(n)) {
            dst.copy_from_slice(row);
        }
        if !mean_out.is_null() {
            std::slice::from_raw_parts_mut(mean_out, n).copy_from_slice(&cov.mean);
        }
        Ok(())
    })
}

/// # Safety
/// `conv` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_converter_free(conv: *mut RsConverter) {
    if !conv.is_null() {
        drop(Box::from_raw(conv));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_errors_map_to_their_code() {
        assert_eq!(status_of(&Error::Unstable { max_real: 0.1 }), RsStatus::Numerical);
        assert_eq!(status_of(&Error::Singular("x")), RsStatus::Numerical);
        assert_eq!(status_of(&Error::ZeroDuration), RsStatus::InvalidArgument);
    }

    #[test]
    fn panics_become_a_status() {
        assert_eq!(guard(|| panic!("boom")), RsStatus::Panic);
        assert!(!rs_last_error().is_null());
    }
}
