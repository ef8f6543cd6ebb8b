//! C ABI over `specdetect`.
//!
//! Every function returns an [`SdStatus`]; results go through out-pointers.
//! On failure, [`sd_last_error_message`] describes the most recent error on
//! the calling thread. Backends are opaque [`SdBackend`] handles released with
//! [`sd_backend_free`]. Images are `height * width * channels` doubles,
//! row-major, channel-last, nominally in `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use specdetect::backend::{open_backend, BackendDescriptor, BackendHandle};
use specdetect::detector::score;
use specdetect::eval::auc;
use specdetect::{Error, ImageTensor, PerturbConfig, Perturber};

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Bundle = 5,
    Shape = 6,
    Empty = 7,
    Numeric = 8,
    Panic = 9,
}

/// Perturbation parameters; see [`sd_perturb_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SdPerturbConfig {
    pub lambda: f64,
    pub tau: f64,
    pub patch_size: usize,
    pub seed: u64,
}

impl From<SdPerturbConfig> for PerturbConfig {
    fn from(c: SdPerturbConfig) -> Self {
        PerturbConfig {
            lambda: c.lambda,
            tau: c.tau,
            patch_size: c.patch_size,
            seed: c.seed,
        }
    }
}

/// Opaque embedding backend.
pub struct SdBackend {
    handle: BackendHandle,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> SdStatus {
    match e {
        Error::Config(_) | Error::Unsupported(_) | Error::LayerOutOfRange { .. } => {
            SdStatus::Config
        }
        Error::Io(_)
        | Error::Json(_)
        | Error::Decode { .. }
        | Error::UnsupportedFormat(_)
        | Error::Parse { .. }
        | Error::Encode(_) => SdStatus::Io,
        Error::BundleLoad { .. } => SdStatus::Bundle,
        Error::ShapeMismatch { .. } | Error::DimMismatch(..) | Error::Dimension(_) => {
            SdStatus::Shape
        }
        Error::EmptyManifest(_) | Error::EmptyClass(_) => SdStatus::Empty,
        Error::ZeroVector | Error::NonFinite(_) => SdStatus::Numeric,
    }
}

struct Fail(SdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SdStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SdStatus::Panic
        }
    }
}

unsafe fn image_from_raw(
    pixels: *const f64,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<ImageTensor, Fail> {
    if pixels.is_null() {
        return Err(null("pixels"));
    }
    let len = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Fail(SdStatus::InvalidArgument, "image size overflows".into()))?;
    let data = std::slice::from_raw_parts(pixels, len).to_vec();
    Ok(ImageTensor::new(height, width, channels, data)?)
}

unsafe fn backend_ref<'a>(backend: *const SdBackend) -> Result<&'a SdBackend, Fail> {
    backend.as_ref().ok_or_else(|| null("backend"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Defaults: lambda 0.01, tau 0.5, patch size 14, seed 0.
#[no_mangle]
pub extern "C" fn sd_perturb_config_default() -> SdPerturbConfig {
    let d = PerturbConfig::default();
    SdPerturbConfig {
        lambda: d.lambda,
        tau: d.tau,
        patch_size: d.patch_size,
        seed: d.seed,
    }
}

fn open(desc: BackendDescriptor, out: *mut *mut SdBackend) -> SdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let handle = open_backend(&desc)?;
        unsafe { out.write(Box::into_raw(Box::new(SdBackend { handle }))) };
        Ok(())
    })
}

/// Opens the weight-free spectral reference backend for `input_size`-square images.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sd_backend_open_spectral(
    input_size: usize,
    out: *mut *mut SdBackend,
) -> SdStatus {
    open(BackendDescriptor::spectral(input_size), out)
}

/// Opens a ViT bundle directory and selects hidden-state `layer`.
///
/// # Safety
/// `bundle_dir` must be a NUL-terminated UTF-8 path; `out` as for
/// [`sd_backend_open_spectral`].
#[no_mangle]
pub unsafe extern "C" fn sd_backend_open_vit(
    bundle_dir: *const c_char,
    layer: usize,
    input_size: usize,
    out: *mut *mut SdBackend,
) -> SdStatus {
    if bundle_dir.is_null() {
        return guard(|| Err(null("bundle_dir")));
    }
    let dir = match CStr::from_ptr(bundle_dir).to_str() {
        Ok(s) => PathBuf::from(s),
        Err(_) => {
            return guard(|| {
                Err(Fail(
                    SdStatus::InvalidArgument,
                    "bundle_dir is not UTF-8".into(),
                ))
            })
        }
    };
    open(BackendDescriptor::vit(dir, layer, input_size), out)
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `backend` must come from an `sd_backend_open_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_backend_free(backend: *mut SdBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

/// Embedding dimension of the backend.
///
/// # Safety
/// `backend` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_backend_embed_dim(
    backend: *const SdBackend,
    out: *mut usize,
) -> SdStatus {
    guard(|| write_out(out, backend_ref(backend)?.handle.embed_dim()))
}

/// Side length of the square images the backend accepts.
///
/// # Safety
/// `backend` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_backend_input_size(
    backend: *const SdBackend,
    out: *mut usize,
) -> SdStatus {
    guard(|| write_out(out, backend_ref(backend)?.handle.input_size()))
}

/// Embeds one image into `out`, which holds `out_len >= embed_dim` doubles.
///
/// # Safety
/// `pixels` must hold `height * width * channels` doubles and `out` `out_len`.
#[no_mangle]
pub unsafe extern "C" fn sd_backend_embed(
    backend: *const SdBackend,
    pixels: *const f64,
    height: usize,
    width: usize,
    channels: usize,
    out: *mut f64,
    out_len: usize,
) -> SdStatus {
    guard(|| {
        let b = backend_ref(backend)?;
        let img = image_from_raw(pixels, height, width, channels)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = b.handle.embed(&img)?;
        if out_len < e.dim() {
            return Err(Fail(
                SdStatus::InvalidArgument,
                format!("output holds {out_len} values, embedding has {}", e.dim()),
            ));
        }
        std::slice::from_raw_parts_mut(out, e.dim()).copy_from_slice(e.values());
        Ok(())
    })
}

/// Writes `x + delta` for image `image_index` into `out` (same length as the input).
///
/// # Safety
/// `cfg` must be valid; `pixels` and `out` must each hold
/// `height * width * channels` doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_perturb(
    cfg: *const SdPerturbConfig,
    pixels: *const f64,
    height: usize,
    width: usize,
    channels: usize,
    image_index: u64,
    out: *mut f64,
) -> SdStatus {
    guard(|| {
        let cfg = *cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let img = image_from_raw(pixels, height, width, channels)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = Perturber::new(cfg.into())?.perturb(&img, image_index)?;
        std::slice::from_raw_parts_mut(out, p.data().len()).copy_from_slice(p.data());
        Ok(())
    })
}

/// Detection score `cos(f(x), f(x + delta))` of one preprocessed image.
///
/// # Safety
/// `backend` must be a live handle, `cfg` valid, `pixels` sized as for
/// [`sd_perturb`] and `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_score(
    backend: *const SdBackend,
    cfg: *const SdPerturbConfig,
    pixels: *const f64,
    height: usize,
    width: usize,
    channels: usize,
    image_index: u64,
    out_score: *mut f64,
) -> SdStatus {
    guard(|| {
        let b = backend_ref(backend)?;
        let cfg = *cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let img = image_from_raw(pixels, height, width, channels)?;
        let perturber = Perturber::new(cfg.into())?;
        let s = score(&img, &perturber, b.handle.backend(), image_index)?;
        write_out(out_score, s)
    })
}

/// AUC with fakes as positives; tied pairs count one half.
///
/// # Safety
/// `real` and `fake` must hold `n_real` and `n_fake` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_auc(
    real: *const f64,
    n_real: usize,
    fake: *const f64,
    n_fake: usize,
    out: *mut f64,
) -> SdStatus {
    guard(|| {
        let slice = |p: *const f64, n: usize, what| {
            if n == 0 {
                Ok(&[][..])
            } else if p.is_null() {
                Err(null(what))
            } else {
                Ok(std::slice::from_raw_parts(p, n))
            }
        };
        let a = auc(slice(real, n_real, "real")?, slice(fake, n_fake, "fake")?)?;
        write_out(out, a)
    })
}
