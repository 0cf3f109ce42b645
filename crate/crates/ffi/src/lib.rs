//! C ABI over the attrstress core.
//!
//! Every fallible function returns a status code; `ATTRSTRESS_OK` is zero.
//! On failure `attrstress_last_error` describes what went wrong on the
//! calling thread. Models are opaque handles released with
//! `attrstress_model_free`. Images are row-major `double` arrays.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use attrstress::attribution::{attribute, AttributionMap, Method};
use attrstress::counterexamples::accuracy_counterexample;
use attrstress::dataio::BoundingBox;
use attrstress::metrics::pointing_game;
use attrstress::models::{load_checkpoint, AnyModel, Classifier, ConvNet};
use attrstress::numeric::{ImageGrid, SeededStream};
use attrstress::proposition::{expected_dice_closed_form, expected_dice_exhaustive, expected_dice_monte_carlo};
use attrstress::Error;

pub const ATTRSTRESS_OK: i32 = 0;
pub const ATTRSTRESS_ERR_NULL_POINTER: i32 = 1;
pub const ATTRSTRESS_ERR_INVALID_PARAMETER: i32 = 2;
pub const ATTRSTRESS_ERR_MISSING_FILE: i32 = 3;
pub const ATTRSTRESS_ERR_BAD_CHECKPOINT: i32 = 4;
pub const ATTRSTRESS_ERR_DIMENSION: i32 = 5;
pub const ATTRSTRESS_ERR_UNSUPPORTED: i32 = 6;
pub const ATTRSTRESS_ERR_OVERFLOW: i32 = 7;
pub const ATTRSTRESS_ERR_NUMERIC: i32 = 8;
pub const ATTRSTRESS_ERR_INTERNAL: i32 = 9;

/// Opaque model handle.
pub struct AttrstressModel {
    inner: AnyModel,
}

/// Interior rows and columns of an object, inclusive.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AttrstressBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AttrstressDiceReport {
    pub n: usize,
    pub n_ref: usize,
    pub closed_form: f64,
    /// NaN when N is too large for the exact path.
    pub exhaustive_mean: f64,
    pub mc_mean: f64,
    pub mc_trials: usize,
    pub mc_stderr: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AttrstressCounterexample {
    pub unmasked_logits: [f64; 3],
    pub mask_top_logits: [f64; 3],
    pub mask_other_logits: [f64; 3],
    pub mask_all_logits: [f64; 3],
    pub top_feature: usize,
    pub prediction_unmasked: usize,
    pub prediction_mask_top: usize,
    pub prediction_mask_other: usize,
    pub verdict: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { .. } | Error::ClassOutOfRange { .. } => ATTRSTRESS_ERR_INVALID_PARAMETER,
        Error::Dimension { .. } => ATTRSTRESS_ERR_DIMENSION,
        Error::UnsupportedModel { .. } => ATTRSTRESS_ERR_UNSUPPORTED,
        Error::Overflow { .. } => ATTRSTRESS_ERR_OVERFLOW,
        Error::NonFinite { .. } | Error::Divergence { .. } => ATTRSTRESS_ERR_NUMERIC,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ATTRSTRESS_ERR_MISSING_FILE,
        Error::Checkpoint(_) | Error::Json(_) => ATTRSTRESS_ERR_BAD_CHECKPOINT,
        _ => ATTRSTRESS_ERR_INTERNAL,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ATTRSTRESS_OK
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ATTRSTRESS_ERR_NULL_POINTER
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            code_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            ATTRSTRESS_ERR_INTERNAL
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const AttrstressModel) -> Result<&'a AnyModel, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or(Fail::Null("model"))
}

unsafe fn c_str<'a>(s: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidParameter { name: what, reason: "not UTF-8".into() }))
}

fn grid(model: &AnyModel, pixels: &[f64]) -> Result<ImageGrid, Fail> {
    let (h, w) = model.input_shape();
    Ok(ImageGrid::new(h, w, pixels.to_vec(), (f64::NEG_INFINITY, f64::INFINITY))?)
}

fn copy_out(dst: &mut [f64], src: &[f64]) -> Result<(), Fail> {
    if dst.len() != src.len() {
        return Err(Fail::Lib(Error::Dimension {
            expected: format!("{} output slots", src.len()),
            actual: format!("{}", dst.len()),
        }));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn attrstress_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Null-terminated library version.
#[no_mangle]
pub extern "C" fn attrstress_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn attrstress_model_load(path: *const c_char, out: *mut *mut AttrstressModel) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let model = load_checkpoint(c_str(path, "path")?)?;
        *out = Box::into_raw(Box::new(AttrstressModel { inner: model }));
        Ok(())
    })
}

/// Seeded, untrained ConvNet for 28x28 inputs.
#[no_mangle]
pub unsafe extern "C" fn attrstress_model_untrained(seed: u64, out: *mut *mut AttrstressModel) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let inner = AnyModel::Conv(ConvNet::init_untrained(seed));
        *out = Box::into_raw(Box::new(AttrstressModel { inner }));
        Ok(())
    })
}

/// Accepts null.
#[no_mangle]
pub unsafe extern "C" fn attrstress_model_free(model: *mut AttrstressModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn attrstress_model_shape(
    model: *const AttrstressModel,
    height: *mut usize,
    width: *mut usize,
    classes: *mut usize,
) -> i32 {
    guard(|| {
        let m = model_ref(model)?;
        if height.is_null() || width.is_null() || classes.is_null() {
            return Err(Fail::Null("shape outputs"));
        }
        let (h, w) = m.input_shape();
        *height = h;
        *width = w;
        *classes = m.class_count();
        Ok(())
    })
}

/// Writes `classes` logits for one image of `height * width` pixels.
#[no_mangle]
pub unsafe extern "C" fn attrstress_model_logits(
    model: *const AttrstressModel,
    pixels: *const f64,
    n_pixels: usize,
    out: *mut f64,
    n_out: usize,
) -> i32 {
    guard(|| {
        let m = model_ref(model)?;
        let x = grid(m, slice(pixels, n_pixels, "pixels")?)?;
        copy_out(slice_mut(out, n_out, "out")?, &m.logits(&x)?)
    })
}

/// Attribution map for `target`. `method` is a method id such as
/// `"gradient"` or `"grad_cam"`; `seed` only matters for `"random"`.
#[no_mangle]
pub unsafe extern "C" fn attrstress_attribute(
    model: *const AttrstressModel,
    method: *const c_char,
    pixels: *const f64,
    n_pixels: usize,
    target: usize,
    seed: u64,
    out: *mut f64,
    n_out: usize,
) -> i32 {
    guard(|| {
        let m = model_ref(model)?;
        let method: Method = c_str(method, "method")?.parse()?;
        let x = grid(m, slice(pixels, n_pixels, "pixels")?)?;
        let map = attribute(method, m, &x, target, SeededStream::new(seed))?;
        copy_out(slice_mut(out, n_out, "out")?, map.values.values())
    })
}

/// Pointing Game over `n_maps` maps of `height * width` values stored
/// back to back, one box per map.
#[no_mangle]
pub unsafe extern "C" fn attrstress_pointing_game(
    maps: *const f64,
    n_maps: usize,
    height: usize,
    width: usize,
    boxes: *const AttrstressBox,
    tolerance: f64,
    hits: *mut usize,
    ratio: *mut f64,
) -> i32 {
    guard(|| {
        let d = height
            .checked_mul(width)
            .and_then(|d| d.checked_mul(n_maps))
            .ok_or_else(|| Fail::Lib(Error::InvalidParameter { name: "n_maps", reason: "size overflow".into() }))?;
        let values = slice(maps, d, "maps")?;
        let boxes = slice(boxes, n_maps, "boxes")?;
        if hits.is_null() || ratio.is_null() {
            return Err(Fail::Null("outputs"));
        }
        let grids = values
            .chunks(height * width)
            .map(|c| ImageGrid::new(height, width, c.to_vec(), (f64::NEG_INFINITY, f64::INFINITY)))
            .collect::<attrstress::Result<Vec<_>>>()?;
        let maps: Vec<AttributionMap> = grids
            .into_iter()
            .map(|values| AttributionMap {
                values,
                target: 0,
                method: Method::Random,
                model_fingerprint: None,
            })
            .collect();
        let boxes: Vec<BoundingBox> = boxes
            .iter()
            .map(|b| BoundingBox {
                row_min: b.row_min,
                row_max: b.row_max,
                col_min: b.col_min,
                col_max: b.col_max,
            })
            .collect();
        let r = pointing_game(&maps, &boxes, tolerance)?;
        *hits = r.hits;
        *ratio = r.ratio;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn attrstress_dice_closed_form(n: usize, n_ref: usize, out: *mut f64) -> i32 {
    guard(|| {
        let v = expected_dice_closed_form(n, n_ref)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = v;
        Ok(())
    })
}

/// Exact expected Dice as a reduced fraction (N <= 20).
#[no_mangle]
pub unsafe extern "C" fn attrstress_dice_exhaustive(n: usize, n_ref: usize, num: *mut u64, den: *mut u64) -> i32 {
    guard(|| {
        if num.is_null() || den.is_null() {
            return Err(Fail::Null("outputs"));
        }
        let r = expected_dice_exhaustive(n, n_ref)?;
        *num = r.num as u64;
        *den = r.den as u64;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn attrstress_dice_monte_carlo(
    n: usize,
    n_ref: usize,
    trials: usize,
    seed: u64,
    out: *mut AttrstressDiceReport,
) -> i32 {
    guard(|| {
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let r = expected_dice_monte_carlo(n, n_ref, trials, SeededStream::new(seed))?;
        *out = AttrstressDiceReport {
            n: r.n,
            n_ref: r.n_ref,
            closed_form: r.closed_form,
            exhaustive_mean: r.exhaustive_mean.unwrap_or(f64::NAN),
            mc_mean: r.mc_mean,
            mc_trials: r.mc_trials,
            mc_stderr: r.mc_stderr,
        };
        Ok(())
    })
}

/// The three-class, two-feature linear counterexample.
#[no_mangle]
pub unsafe extern "C" fn attrstress_counterexample(out: *mut AttrstressCounterexample) -> i32 {
    guard(|| {
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let v = accuracy_counterexample()?;
        let three = |s: &[f64]| [s[0], s[1], s[2]];
        *out = AttrstressCounterexample {
            unmasked_logits: three(&v.unmasked_logits),
            mask_top_logits: three(&v.mask_top_logits),
            mask_other_logits: three(&v.mask_other_logits),
            mask_all_logits: three(&v.mask_all_logits),
            top_feature: v.top_feature,
            prediction_unmasked: v.prediction_unmasked,
            prediction_mask_top: v.prediction_mask_top,
            prediction_mask_other: v.prediction_mask_other,
            verdict: v.verdict,
        };
        Ok(())
    })
}
