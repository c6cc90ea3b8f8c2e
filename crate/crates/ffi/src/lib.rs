//! C ABI for the dmseg toolkit.
//!
//! The surface covers the embedding-friendly parts of the library: volume
//! and mask I/O, distance-map computation, checkpoint loading, inference,
//! and pair metrics. Training stays behind the Rust API and the CLI, where
//! the configuration surface is typed.
//!
//! Conventions, uniform across every entry point:
//! - Objects cross the boundary as opaque handles; `dmseg_*_free` releases
//!   them and ignores null.
//! - Every fallible call returns a [`DmsegStatus`]; on failure a
//!   thread-local message is set, readable via [`dmseg_last_error`].
//! - Panics never unwind across the boundary; they surface as
//!   `DMSEG_STATUS_PANIC`.
//! - Null argument pointers are reported, never dereferenced.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use dmseg::dm::{dm_to_mask, edt_exact, to_variant, DistanceMap, DmVariant};
use dmseg::error::Error;
use dmseg::metrics::{dice_per_case, surface_distances, voe_rvd};
use dmseg::nn::checkpoint::Checkpoint;
use dmseg::pipeline::{checkpoint_id, infer};
use dmseg::volume::{Mask, Volume};

// ---------------------------------------------------------------------------
// Status codes and the thread-local error message.

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DmsegStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A path or string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The arguments were well-formed but invalid (shape mismatch, unknown
    /// class, wrong checkpoint kind, ...).
    InvalidArgument = 3,
    /// File-system failure; the message names the path.
    Io = 4,
    /// A file exists but its contents are malformed.
    Format = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    // Interior NULs cannot come out of our error types, but never trust that.
    let sanitized = msg.replace('\0', "?");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

struct Failure {
    status: DmsegStatus,
    message: String,
}

impl Failure {
    fn null(what: &str) -> Self {
        Failure {
            status: DmsegStatus::NullArgument,
            message: format!("{what} must not be null"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => DmsegStatus::Io,
            Error::Format { .. } => DmsegStatus::Format,
            _ => DmsegStatus::InvalidArgument,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

type FfiResult = Result<(), Failure>;

/// Run a fallible body, translating panics and failures into status codes.
fn guarded(f: impl FnOnce() -> FfiResult) -> DmsegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            DmsegStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            DmsegStatus::Panic
        }
    }
}

/// Copy the message of the most recent failure on this thread into `buf`
/// (NUL-terminated, truncated to `cap`). Returns the full length the message
/// needs including the NUL; call with a null `buf` or `cap == 0` to query.
#[no_mangle]
pub unsafe extern "C" fn dmseg_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // Guarantee termination even when truncating.
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dmseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// Small pointer helpers.

unsafe fn utf8_path<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure {
        status: DmsegStatus::InvalidUtf8,
        message: format!("{what} is not valid UTF-8"),
    })
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn read_array<const N: usize, T: Copy>(
    ptr: *const T,
    what: &str,
) -> Result<[T; N], Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    let mut out = [*ptr; N];
    for (i, v) in out.iter_mut().enumerate() {
        *v = *ptr.add(i);
    }
    Ok(out)
}

unsafe fn copy_slice<T: Copy>(src: &[T], buf: *mut T, cap: usize, what: &str) -> FfiResult {
    if buf.is_null() {
        return Err(Failure::null(what));
    }
    if cap != src.len() {
        return Err(Failure {
            status: DmsegStatus::InvalidArgument,
            message: format!("{what} holds {cap} elements, need exactly {}", src.len()),
        });
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// Volumes.

/// Opaque handle to a scalar f32 volume.
pub struct DmsegVolume {
    inner: Volume<f32>,
}

/// Build a volume from a dense z-major buffer of `shape[0]*shape[1]*shape[2]`
/// values.
///
/// # Safety
/// `shape` and `spacing` point to 3 elements; `data` points to `len` floats.
#[no_mangle]
pub unsafe extern "C" fn dmseg_volume_create(
    shape: *const usize,
    spacing: *const f32,
    data: *const f32,
    len: usize,
    out: *mut *mut DmsegVolume,
) -> DmsegStatus {
    guarded(|| {
        let shape = read_array::<3, usize>(shape, "shape")?;
        let spacing = read_array::<3, f32>(spacing, "spacing")?;
        if data.is_null() {
            return Err(Failure::null("data"));
        }
        let data = std::slice::from_raw_parts(data, len).to_vec();
        let vol = Volume::from_vec(shape, spacing, data)?;
        write_handle(out, DmsegVolume { inner: vol })
    })
}

/// Read an RVOL file with an f32 payload.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dmseg_volume_read_rvol(
    path: *const c_char,
    out: *mut *mut DmsegVolume,
) -> DmsegStatus {
    guarded(|| {
        let path = utf8_path(path, "path")?;
        let vol = Volume::<f32>::read_rvol(path)?;
        write_handle(out, DmsegVolume { inner: vol })
    })
}

/// Write the volume as an RVOL file.
///
/// # Safety
/// `vol` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dmseg_volume_write_rvol(
    vol: *const DmsegVolume,
    path: *const c_char,
) -> DmsegStatus {
    guarded(|| {
        let vol = deref(vol, "vol")?;
        let path = utf8_path(path, "path")?;
        vol.inner.write_rvol(path)?;
        Ok(())
    })
}

/// Number of voxels, or 0 for a null handle.
///
/// # Safety
/// `vol` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dmseg_volume_len(vol: *const DmsegVolume) -> usize {
    vol.as_ref().map_or(0, |v| v.inner.len())
}

/// Copy shape (3 elements) and spacing (3 elements) out of the handle.
///
/// # Safety
/// `vol` is a live handle; `shape` and `spacing` point to 3 writable
/// elements each (either may be null to skip it).
#[no_mangle]
pub unsafe extern "C" fn dmseg_volume_geometry(
    vol: *const DmsegVolume,
    shape: *mut usize,
    spacing: *mut f32,
) -> DmsegStatus {
    guarded(|| {
        let vol = deref(vol, "vol")?;
        if !shape.is_null() {
            std::ptr::copy_nonoverlapping(vol.inner.shape().as_ptr(), shape, 3);
        }
        if !spacing.is_null() {
            std::ptr::copy_nonoverlapping(vol.inner.spacing().as_ptr(), spacing, 3);
        }
        Ok(())
    })
}

/// Copy the dense z-major payload into `buf`, which must hold exactly
/// `dmseg_volume_len` elements.
///
/// # Safety
/// `vol` is a live handle; `buf` points to `cap` writable floats.
#[no_mangle]
pub unsafe extern "C" fn dmseg_volume_copy_data(
    vol: *const DmsegVolume,
    buf: *mut f32,
    cap: usize,
) -> DmsegStatus {
    guarded(|| {
        let vol = deref(vol, "vol")?;
        copy_slice(vol.inner.data(), buf, cap, "buf")
    })
}

/// Release a volume handle; null is ignored.
///
/// # Safety
/// `vol` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dmseg_volume_free(vol: *mut DmsegVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

// ---------------------------------------------------------------------------
// Masks.

/// Opaque handle to a label volume with a known class count.
pub struct DmsegMask {
    inner: Mask,
}

/// Build a mask from dense z-major labels, all `< num_classes`.
///
/// # Safety
/// `shape`/`spacing` point to 3 elements; `labels` points to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dmseg_mask_create(
    shape: *const usize,
    spacing: *const f32,
    labels: *const u8,
    len: usize,
    num_classes: u8,
    out: *mut *mut DmsegMask,
) -> DmsegStatus {
    guarded(|| {
        let shape = read_array::<3, usize>(shape, "shape")?;
        let spacing = read_array::<3, f32>(spacing, "spacing")?;
        if labels.is_null() {
            return Err(Failure::null("labels"));
        }
        let labels = std::slice::from_raw_parts(labels, len).to_vec();
        let mask = Mask::new(Volume::from_vec(shape, spacing, labels)?, num_classes)?;
        write_handle(out, DmsegMask { inner: mask })
    })
}

/// Read a u8 RVOL as a mask (class count = max label + 1, at least 2).
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dmseg_mask_read_rvol(
    path: *const c_char,
    out: *mut *mut DmsegMask,
) -> DmsegStatus {
    guarded(|| {
        let path = utf8_path(path, "path")?;
        let mask = Mask::read_rvol(path)?;
        write_handle(out, DmsegMask { inner: mask })
    })
}

/// Write the mask labels as an RVOL file.
///
/// # Safety
/// `mask` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dmseg_mask_write_rvol(
    mask: *const DmsegMask,
    path: *const c_char,
) -> DmsegStatus {
    guarded(|| {
        let mask = deref(mask, "mask")?;
        let path = utf8_path(path, "path")?;
        mask.inner.write_rvol(path)?;
        Ok(())
    })
}

/// Number of voxels, or 0 for a null handle.
///
/// # Safety
/// `mask` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dmseg_mask_len(mask: *const DmsegMask) -> usize {
    mask.as_ref().map_or(0, |m| m.inner.vol().len())
}

/// Class count, or 0 for a null handle.
///
/// # Safety
/// `mask` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dmseg_mask_num_classes(mask: *const DmsegMask) -> u8 {
    mask.as_ref().map_or(0, |m| m.inner.num_classes())
}

/// Copy the dense z-major labels into `buf`, which must hold exactly
/// `dmseg_mask_len` elements.
///
/// # Safety
/// `mask` is a live handle; `buf` points to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dmseg_mask_copy_labels(
    mask: *const DmsegMask,
    buf: *mut u8,
    cap: usize,
) -> DmsegStatus {
    guarded(|| {
        let mask = deref(mask, "mask")?;
        copy_slice(mask.inner.vol().data(), buf, cap, "buf")
    })
}

/// Release a mask handle; null is ignored.
///
/// # Safety
/// `mask` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dmseg_mask_free(mask: *mut DmsegMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

// ---------------------------------------------------------------------------
// Distance maps.

/// Which distance-map transform to compute.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DmsegDmVariant {
    /// Original map: distance to the class boundary, everywhere.
    Odm = 0,
    /// Inverse map on the foreground.
    Idm = 1,
    /// Normalized inverse map on the foreground.
    Nidm = 2,
    /// Signed normalized inverse map (negative outside).
    Snidm = 3,
}

impl From<DmsegDmVariant> for DmVariant {
    fn from(v: DmsegDmVariant) -> Self {
        match v {
            DmsegDmVariant::Odm => DmVariant::Odm,
            DmsegDmVariant::Idm => DmVariant::Idm,
            DmsegDmVariant::Nidm => DmVariant::Nidm,
            DmsegDmVariant::Snidm => DmVariant::Snidm,
        }
    }
}

/// Opaque handle to a distance map plus its interpretation metadata.
pub struct DmsegDistanceMap {
    inner: DistanceMap,
}

/// Compute `variant` for `class_id` of the mask. Fails when the class has
/// no boundary (absent or image-filling).
///
/// # Safety
/// `mask` is a live handle; `out` is a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dmseg_compute_dm(
    mask: *const DmsegMask,
    class_id: u8,
    variant: DmsegDmVariant,
    out: *mut *mut DmsegDistanceMap,
) -> DmsegStatus {
    guarded(|| {
        let mask = deref(mask, "mask")?;
        let odm = edt_exact(&mask.inner, class_id)?;
        let dm = match DmVariant::from(variant) {
            DmVariant::Odm => odm,
            v => to_variant(&odm, &mask.inner, v)?,
        };
        write_handle(out, DmsegDistanceMap { inner: dm })
    })
}

/// Clone the map's values into a standalone volume handle.
///
/// # Safety
/// `dm` is a live handle; `out` is a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dmseg_dm_values(
    dm: *const DmsegDistanceMap,
    out: *mut *mut DmsegVolume,
) -> DmsegStatus {
    guarded(|| {
        let dm = deref(dm, "dm")?;
        write_handle(
            out,
            DmsegVolume {
                inner: dm.inner.values.clone(),
            },
        )
    })
}

/// Recover a binary mask from an NI-DM (threshold applies) or SNI-DM
/// (sign decides). Other variants are not invertible.
///
/// # Safety
/// `dm` is a live handle; `out` is a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dmseg_dm_to_mask(
    dm: *const DmsegDistanceMap,
    threshold: f32,
    out: *mut *mut DmsegMask,
) -> DmsegStatus {
    guarded(|| {
        let dm = deref(dm, "dm")?;
        let mask = dm_to_mask(&dm.inner, threshold)?;
        write_handle(out, DmsegMask { inner: mask })
    })
}

/// Write the map as RVOL plus its `.json` metadata sidecar.
///
/// # Safety
/// `dm` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dmseg_dm_write_files(
    dm: *const DmsegDistanceMap,
    path: *const c_char,
) -> DmsegStatus {
    guarded(|| {
        let dm = deref(dm, "dm")?;
        let path = utf8_path(path, "path")?;
        dm.inner.write_files(path)?;
        Ok(())
    })
}

/// Read a map written by [`dmseg_dm_write_files`].
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dmseg_dm_read_files(
    path: *const c_char,
    out: *mut *mut DmsegDistanceMap,
) -> DmsegStatus {
    guarded(|| {
        let path = utf8_path(path, "path")?;
        let dm = DistanceMap::read_files(path)?;
        write_handle(out, DmsegDistanceMap { inner: dm })
    })
}

/// Release a distance-map handle; null is ignored.
///
/// # Safety
/// `dm` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dmseg_dm_free(dm: *mut DmsegDistanceMap) {
    if !dm.is_null() {
        drop(Box::from_raw(dm));
    }
}

// ---------------------------------------------------------------------------
// Checkpoints and inference.

/// Opaque handle to a network checkpoint.
pub struct DmsegCheckpoint {
    inner: Checkpoint,
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dmseg_checkpoint_load(
    path: *const c_char,
    out: *mut *mut DmsegCheckpoint,
) -> DmsegStatus {
    guarded(|| {
        let path = utf8_path(path, "path")?;
        let ck = Checkpoint::load(path)?;
        write_handle(out, DmsegCheckpoint { inner: ck })
    })
}

/// Copy the checkpoint's 16-hex content id into `buf` (NUL-terminated).
/// Returns the length needed including the NUL (17).
///
/// # Safety
/// `ck` is a live handle; `buf` points to `cap` writable chars or is null.
#[no_mangle]
pub unsafe extern "C" fn dmseg_checkpoint_id(
    ck: *const DmsegCheckpoint,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    let Some(ck) = ck.as_ref() else { return 0 };
    let id = checkpoint_id(&ck.inner);
    let bytes = id.as_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
        *buf.add(n) = 0;
    }
    bytes.len() + 1
}

/// Segment one image with a segmentation checkpoint; the result is the
/// per-voxel argmax mask.
///
/// # Safety
/// `ck` and `image` are live handles; `out` is a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dmseg_infer(
    ck: *const DmsegCheckpoint,
    image: *const DmsegVolume,
    out: *mut *mut DmsegMask,
) -> DmsegStatus {
    guarded(|| {
        let ck = deref(ck, "ck")?;
        let image = deref(image, "image")?;
        let (mask, _probs) = infer(&ck.inner, &image.inner)?;
        write_handle(out, DmsegMask { inner: mask })
    })
}

/// Release a checkpoint handle; null is ignored.
///
/// # Safety
/// `ck` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dmseg_checkpoint_free(ck: *mut DmsegCheckpoint) {
    if !ck.is_null() {
        drop(Box::from_raw(ck));
    }
}

// ---------------------------------------------------------------------------
// Metrics.

/// Per-pair evaluation summary. `rvd` is meaningful only when `has_rvd` is
/// true (the reference had foreground); surface distances fall back to the
/// image-diagonal sentinel when `degenerate` is set.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DmsegPairMetrics {
    pub dc: f64,
    pub voe: f64,
    pub rvd: f64,
    pub has_rvd: bool,
    pub assd_mm: f64,
    pub msd_mm: f64,
    pub rmsd_mm: f64,
    pub degenerate: bool,
}

/// Score a predicted binary mask against a reference binary mask.
///
/// # Safety
/// `pred` and `reference` are live handles; `out` points to a writable
/// struct.
#[no_mangle]
pub unsafe extern "C" fn dmseg_evaluate_pair(
    pred: *const DmsegMask,
    reference: *const DmsegMask,
    out: *mut DmsegPairMetrics,
) -> DmsegStatus {
    guarded(|| {
        let pred = deref(pred, "pred")?;
        let reference = deref(reference, "reference")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let dc = dice_per_case(&pred.inner, &reference.inner)?;
        let ov = voe_rvd(&pred.inner, &reference.inner)?;
        let sd = surface_distances(&pred.inner, &reference.inner)?;
        *out = DmsegPairMetrics {
            dc,
            voe: ov.voe,
            rvd: ov.rvd.unwrap_or(0.0),
            has_rvd: ov.rvd.is_some(),
            assd_mm: sd.assd_mm,
            msd_mm: sd.msd_mm,
            rmsd_mm: sd.rmsd_mm,
            degenerate: ov.degenerate || sd.degenerate,
        };
        Ok(())
    })
}
