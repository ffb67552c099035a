//! C ABI over `oslo`.
//!
//! Every function returns an [`OsloStatus`]. On failure a message is kept
//! per thread and can be read with [`oslo_last_error`]. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use oslo::codec::{decode_image, encode_image, Checkpoint, LatentFile};
use oslo::healpix::{ang2pix, neighbors, pix2ang, rigidity_statistics, Direction, Order, PixelId, SphericalPoint};
use oslo::metrics::{psnr, spsnr, wspsnr_healpix, SphereSignal};
use oslo::resample::{erp_to_healpix, read_hpxm, write_hpxm, Dtype, ErpImage, HealpixLookup};
use oslo::tensor::SphereMap;
use oslo::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsloStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Io = 3,
    Format = 4,
    ShapeMismatch = 5,
    ModelMismatch = 6,
    Numeric = 7,
    Panic = 8,
}

/// A full-sphere HEALPix map, channel-major.
pub struct OsloSphereMap(SphereMap);

/// A loaded codec checkpoint.
pub struct OsloModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(OsloStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => OsloStatus::Io,
            Error::Format(_) | Error::Image(_) | Error::Json(_) => OsloStatus::Format,
            Error::ShapeMismatch(_) => OsloStatus::ShapeMismatch,
            Error::ModelMismatch(_) => OsloStatus::ModelMismatch,
            Error::NonFinite(_) | Error::Diverged { .. } => OsloStatus::Numeric,
            _ => OsloStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OsloStatus::NullPointer, format!("{what} is null"))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OsloStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OsloStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            OsloStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn map_ref<'a>(p: *const OsloSphereMap, what: &str) -> Result<&'a SphereMap, Failure> {
    p.as_ref().map(|m| &m.0).ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(OsloStatus::InvalidArgument, "path is not UTF-8".into()))
}

fn pixel(order: u8, index: u64) -> Result<PixelId, Failure> {
    Ok(PixelId::new(Order::new(order)?, index)?)
}

fn boxed<T>(value: T, dst: *mut *mut T) -> Result<(), Failure> {
    let dst = unsafe { out(dst, "output handle")? };
    *dst = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next call into the library on the
/// same thread.
#[no_mangle]
pub extern "C" fn oslo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn oslo_npix(order: u8, npix: *mut u64) -> OsloStatus {
    guard(|| {
        let n = Order::new(order)?.npix();
        *unsafe { out(npix, "npix")? } = n;
        Ok(())
    })
}

/// Colatitude and longitude of a pixel center, in radians.
#[no_mangle]
pub extern "C" fn oslo_pix2ang(order: u8, index: u64, theta: *mut f64, phi: *mut f64) -> OsloStatus {
    guard(|| {
        let pt = pix2ang(pixel(order, index)?);
        *unsafe { out(theta, "theta")? } = pt.theta;
        *unsafe { out(phi, "phi")? } = pt.phi;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oslo_ang2pix(order: u8, theta: f64, phi: f64, index: *mut u64) -> OsloStatus {
    guard(|| {
        if !(0.0..=std::f64::consts::PI).contains(&theta) || !phi.is_finite() {
            return Err(Failure(OsloStatus::InvalidArgument, format!("invalid angles ({theta}, {phi})")));
        }
        let p = ang2pix(SphericalPoint::new(theta, phi), Order::new(order)?);
        *unsafe { out(index, "index")? } = p.index();
        Ok(())
    })
}

/// Writes the 8 neighbors in the order SW, W, NW, N, NE, E, SE, S, with -1
/// where a neighbor does not exist.
#[no_mangle]
pub extern "C" fn oslo_neighbors(order: u8, index: u64, result: *mut i64) -> OsloStatus {
    guard(|| {
        if result.is_null() {
            return Err(null("result"));
        }
        let rec = neighbors(pixel(order, index)?);
        let dst = unsafe { std::slice::from_raw_parts_mut(result, 8) };
        for (slot, d) in Direction::ALL.iter().enumerate() {
            dst[slot] = rec.get(*d).map_or(-1, |p| p.index() as i64);
        }
        Ok(())
    })
}

/// Per-direction relative standard deviation of neighbor distances in
/// percent, in the same direction order as [`oslo_neighbors`], and their mean.
#[no_mangle]
pub extern "C" fn oslo_rigidity(order: u8, rel_std_pct: *mut f64, mean_pct: *mut f64) -> OsloStatus {
    guard(|| {
        if rel_std_pct.is_null() {
            return Err(null("rel_std_pct"));
        }
        let table = rigidity_statistics(Order::new(order)?);
        let dst = unsafe { std::slice::from_raw_parts_mut(rel_std_pct, 8) };
        for (slot, d) in Direction::ALL.iter().enumerate() {
            dst[slot] = table.row(*d).rel_std_pct;
        }
        *unsafe { out(mean_pct, "mean_pct")? } = table.mean_rel_std_pct;
        Ok(())
    })
}

/// A map of `channels * npix(order)` values. `data` may be null, giving zeros.
#[no_mangle]
pub extern "C" fn oslo_map_new(
    order: u8,
    channels: usize,
    data: *const f64,
    len: usize,
    map: *mut *mut OsloSphereMap,
) -> OsloStatus {
    guard(|| {
        let order = Order::new(order)?;
        let n = channels * order.npix() as usize;
        let values = if data.is_null() {
            vec![0.0; n]
        } else {
            if len != n {
                return Err(Failure(OsloStatus::ShapeMismatch, format!("expected {n} values, got {len}")));
            }
            unsafe { slice(data, len, "data")? }.to_vec()
        };
        boxed(OsloSphereMap(SphereMap::new(order, channels, values)?), map)
    })
}

#[no_mangle]
pub extern "C" fn oslo_map_free(map: *mut OsloSphereMap) {
    if !map.is_null() {
        drop(unsafe { Box::from_raw(map) });
    }
}

#[no_mangle]
pub extern "C" fn oslo_map_shape(
    map: *const OsloSphereMap,
    order: *mut u8,
    channels: *mut usize,
    npix: *mut usize,
) -> OsloStatus {
    guard(|| {
        let m = unsafe { map_ref(map, "map")? };
        *unsafe { out(order, "order")? } = m.order().value();
        *unsafe { out(channels, "channels")? } = m.channels();
        *unsafe { out(npix, "npix")? } = m.npix();
        Ok(())
    })
}

/// Borrowed pointer to the `channels * npix` values, valid while the map lives.
#[no_mangle]
pub extern "C" fn oslo_map_data(map: *mut OsloSphereMap, data: *mut *mut f64, len: *mut usize) -> OsloStatus {
    guard(|| {
        let m = unsafe { map.as_mut() }.ok_or_else(|| null("map"))?;
        *unsafe { out(len, "len")? } = m.0.data().len();
        *unsafe { out(data, "data")? } = m.0.data_mut().as_mut_ptr();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oslo_map_read(path_: *const c_char, map: *mut *mut OsloSphereMap) -> OsloStatus {
    guard(|| boxed(OsloSphereMap(read_hpxm(unsafe { path(path_)? })?), map))
}

/// `f32 != 0` stores single precision, otherwise double.
#[no_mangle]
pub extern "C" fn oslo_map_write(map: *const OsloSphereMap, path_: *const c_char, f32: i32) -> OsloStatus {
    guard(|| {
        let dtype = if f32 != 0 { Dtype::F32 } else { Dtype::F64 };
        write_hpxm(unsafe { path(path_)? }, unsafe { map_ref(map, "map")? }, dtype)?;
        Ok(())
    })
}

/// Resamples a channel-major equirectangular image with values in `[0, 1]`.
#[no_mangle]
pub extern "C" fn oslo_erp_to_healpix(
    data: *const f64,
    width: usize,
    height: usize,
    channels: usize,
    order: u8,
    map: *mut *mut OsloSphereMap,
) -> OsloStatus {
    guard(|| {
        let values = unsafe { slice(data, width * height * channels, "data")? }.to_vec();
        let img = ErpImage::new(width, height, channels, values)?;
        boxed(OsloSphereMap(erp_to_healpix(&img, Order::new(order)?)), map)
    })
}

/// Unweighted PSNR in dB over two buffers; identical inputs give infinity.
#[no_mangle]
pub extern "C" fn oslo_psnr(a: *const f64, b: *const f64, len: usize, peak: f64, db: *mut f64) -> OsloStatus {
    guard(|| {
        let v = psnr(unsafe { slice(a, len, "a")? }, unsafe { slice(b, len, "b")? }, peak)?;
        *unsafe { out(db, "db")? } = v;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oslo_wspsnr(a: *const OsloSphereMap, b: *const OsloSphereMap, peak: f64, db: *mut f64) -> OsloStatus {
    guard(|| {
        let v = wspsnr_healpix(unsafe { map_ref(a, "a")? }, unsafe { map_ref(b, "b")? }, peak)?;
        *unsafe { out(db, "db")? } = v;
        Ok(())
    })
}

/// PSNR at the shared uniform point set, four-nearest lookup on both maps.
#[no_mangle]
pub extern "C" fn oslo_spsnr(a: *const OsloSphereMap, b: *const OsloSphereMap, peak: f64, db: *mut f64) -> OsloStatus {
    guard(|| {
        let (a, b) = unsafe { (map_ref(a, "a")?, map_ref(b, "b")?) };
        let v = spsnr(
            SphereSignal::Healpix(a, HealpixLookup::FourNearest),
            SphereSignal::Healpix(b, HealpixLookup::FourNearest),
            peak,
        )?;
        *unsafe { out(db, "db")? } = v;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oslo_model_load(path_: *const c_char, model: *mut *mut OsloModel) -> OsloStatus {
    guard(|| boxed(OsloModel(Checkpoint::load(unsafe { path(path_)? })?), model))
}

#[no_mangle]
pub extern "C" fn oslo_model_free(model: *mut OsloModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Encodes `map` to latent-file bytes. Release them with [`oslo_bytes_free`].
/// `rate_bits` may be null.
#[no_mangle]
pub extern "C" fn oslo_model_compress(
    model: *const OsloModel,
    map: *const OsloSphereMap,
    bytes: *mut *mut u8,
    len: *mut usize,
    rate_bits: *mut f64,
) -> OsloStatus {
    guard(|| {
        let ckpt = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let (file, out_) = encode_image(&ckpt.0, unsafe { map_ref(map, "map")? })?;
        let buf = file.to_bytes().into_boxed_slice();
        let (dst, dst_len) = unsafe { (out(bytes, "bytes")?, out(len, "len")?) };
        if let Some(r) = unsafe { rate_bits.as_mut() } {
            *r = out_.rate_bits;
        }
        *dst_len = buf.len();
        *dst = Box::into_raw(buf) as *mut u8;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oslo_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)) });
    }
}

#[no_mangle]
pub extern "C" fn oslo_model_decompress(
    model: *const OsloModel,
    bytes: *const u8,
    len: usize,
    map: *mut *mut OsloSphereMap,
) -> OsloStatus {
    guard(|| {
        let ckpt = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        let file = LatentFile::from_bytes(unsafe { std::slice::from_raw_parts(bytes, len) })?;
        boxed(OsloSphereMap(decode_image(&ckpt.0.model, &file)?), map)
    })
}
