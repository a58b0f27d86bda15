//! C ABI over the simulator, the Latin Hypercube sampler and trained checkpoints.
//!
//! Every fallible function returns a [`PfStatus`]. On failure a message is
//! kept per thread and can be read with [`pf_last_error`]. Model handles are
//! opaque; release them with [`pf_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use preform_fusion::doe::{lhs_sample, Dimension, ParameterSpace};
use preform_fusion::neural::load_checkpoint;
use preform_fusion::pipeline::Variant;
use preform_fusion::thermal::{simulate, SimConfig, SlabConfig};
use preform_fusion::{Error, TrainedModel, N_POINTS};

/// Number of temperature values in one predicted or simulated field.
pub const PF_N_POINTS: usize = 32;

const _: () = assert!(PF_N_POINTS == N_POINTS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Format = 5,
    Unstable = 6,
    Internal = 7,
}

/// A loaded model checkpoint.
pub struct PfModel {
    model: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PfStatus {
    match e {
        Error::DimensionMismatch { .. } => PfStatus::DimensionMismatch,
        Error::Io { .. } => PfStatus::Io,
        Error::Checkpoint { .. } | Error::Parse { .. } | Error::Manifest { .. } | Error::Json(_) => PfStatus::Format,
        Error::Unstable { .. } => PfStatus::Unstable,
        Error::Diverged { .. } => PfStatus::Internal,
        _ => PfStatus::InvalidArgument,
    }
}

struct Fail(PfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PfStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PfStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PfStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), Fail> {
    if expected != found {
        return Err(Fail(
            PfStatus::DimensionMismatch,
            format!("`{what}` has length {found}, expected {expected}"),
        ));
    }
    Ok(())
}

/// Message describing the most recent failure on this thread, or null if the
/// last call succeeded. The pointer stays valid until the next call into this
/// library from the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file. On success `*out` receives a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_model_load(path: *const c_char, out: *mut *mut PfModel) -> PfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let model = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(PfModel { model }));
        Ok(())
    })
}

/// Releases a handle from [`pf_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must come from [`pf_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pf_model_free(model: *mut PfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features the model expects.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_model_input_dim(model: *const PfModel, out: *mut usize) -> PfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.model.input_dim();
        Ok(())
    })
}

/// Writes the name of input feature `index` into `buf` (NUL-terminated,
/// truncated to `buf_len`). `*needed` receives the full length including the NUL.
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `buf_len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn pf_model_input_name(
    model: *const PfModel,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> PfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let name = m.model.input_names.get(index).ok_or_else(|| {
            Fail(
                PfStatus::InvalidArgument,
                format!("input index {index} out of range for {} inputs", m.model.input_dim()),
            )
        })?;
        if let Some(n) = needed.as_mut() {
            *n = name.len() + 1;
        }
        if buf_len > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            let k = name.len().min(buf_len - 1);
            ptr::copy_nonoverlapping(name.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        Ok(())
    })
}

/// Predicts `rows` temperature fields. `inputs` is row-major `rows × input_dim`
/// and `out` receives `rows × PF_N_POINTS` values in °C.
///
/// # Safety
/// The buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn pf_model_predict(
    model: *const PfModel,
    inputs: *const f64,
    inputs_len: usize,
    rows: usize,
    out: *mut f64,
    out_len: usize,
) -> PfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        check_len("inputs", rows * m.model.input_dim(), inputs_len)?;
        check_len("out", rows * N_POINTS, out_len)?;
        let x = slice_arg(inputs, inputs_len, "inputs")?;
        let dst = slice_out(out, out_len, "out")?;
        if rows == 0 {
            return Ok(());
        }
        let pred = m.model.predict_rows(x, rows)?;
        dst.copy_from_slice(&pred);
        Ok(())
    })
}

/// Runs the heating simulator with default settings for a built-in variant
/// (`low_cp`, `mid_cp`, `high_cp`, `unseen_cp`, `small`, `medium`, `large`,
/// `unseen_geometry`). `positions` are slab positions in mm; `out` receives
/// `PF_N_POINTS` temperatures.
///
/// # Safety
/// `variant` must be NUL-terminated; the buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pf_simulate(
    variant: *const c_char,
    positions: *const f64,
    n_positions: usize,
    out: *mut f64,
    out_len: usize,
) -> PfStatus {
    guard(|| {
        let name = str_arg(variant, "variant")?;
        let v = Variant::preset(name).ok_or_else(|| {
            Fail(
                PfStatus::InvalidArgument,
                format!("unknown variant `{name}`; available: {}", Variant::preset_names().join(", ")),
            )
        })?;
        check_len("out", N_POINTS, out_len)?;
        let pos = slice_arg(positions, n_positions, "positions")?;
        let dst = slice_out(out, out_len, "out")?;
        let field = simulate(&SlabConfig::new(pos.to_vec()), &v.material, &v.geometry, &SimConfig::default())?;
        dst.copy_from_slice(field.values());
        Ok(())
    })
}

/// Draws an `n_points × n_dims` Latin Hypercube design (row-major into `out`)
/// over the box `[lower[j], upper[j]]`.
///
/// # Safety
/// `lower` and `upper` must hold `n_dims` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn pf_lhs(
    n_dims: usize,
    lower: *const f64,
    upper: *const f64,
    n_points: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> PfStatus {
    guard(|| {
        let lo = slice_arg(lower, n_dims, "lower")?;
        let hi = slice_arg(upper, n_dims, "upper")?;
        check_len("out", n_points * n_dims, out_len)?;
        let dims = (0..n_dims)
            .map(|j| Dimension::new(format!("x{}", j + 1), lo[j], hi[j]))
            .collect();
        let space = ParameterSpace::new(dims)?;
        let design = lhs_sample(&space, n_points, seed)?;
        let dst = slice_out(out, out_len, "out")?;
        for (i, row) in design.rows().enumerate() {
            dst[i * n_dims..(i + 1) * n_dims].copy_from_slice(row);
        }
        Ok(())
    })
}
