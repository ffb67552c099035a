use std::ffi::{CStr, CString};
use std::ptr;

use oslo::codec::{ArchConfig, Checkpoint, CodecModel};
use oslo_ffi::*;
use rand::SeedableRng;

fn last_error() -> String {
    unsafe { CStr::from_ptr(oslo_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn geometry_calls() {
    let mut n = 0u64;
    assert_eq!(oslo_npix(10, &mut n), OsloStatus::Ok);
    assert_eq!(n, 12_582_912);
    assert_eq!(oslo_npix(14, &mut n), OsloStatus::InvalidArgument);
    assert!(last_error().contains("14"));
    assert_eq!(oslo_npix(3, ptr::null_mut()), OsloStatus::NullPointer);

    let (mut theta, mut phi) = (0.0, 0.0);
    assert_eq!(oslo_pix2ang(4, 1000, &mut theta, &mut phi), OsloStatus::Ok);
    let mut back = 0u64;
    assert_eq!(oslo_ang2pix(4, theta, phi, &mut back), OsloStatus::Ok);
    assert_eq!(back, 1000);
    assert_eq!(oslo_ang2pix(4, 4.0, 0.0, &mut back), OsloStatus::InvalidArgument);
    assert_eq!(oslo_pix2ang(1, 48, &mut theta, &mut phi), OsloStatus::InvalidArgument);

    let mut nb = [0i64; 8];
    assert_eq!(oslo_neighbors(4, 1000, nb.as_mut_ptr()), OsloStatus::Ok);
    for &n in &nb {
        assert!((0..3072).contains(&n));
        let mut back = [0i64; 8];
        assert_eq!(oslo_neighbors(4, n as u64, back.as_mut_ptr()), OsloStatus::Ok);
        assert!(back.contains(&1000));
    }

    let (mut rel, mut mean) = ([0.0; 8], 0.0);
    assert_eq!(oslo_rigidity(4, rel.as_mut_ptr(), &mut mean), OsloStatus::Ok);
    assert!((rel.iter().sum::<f64>() / 8.0 - mean).abs() < 1e-12);
    assert!((rel[1] - rel[5]).abs() < 1e-6, "{rel:?}");
}

#[test]
fn maps_and_metrics() {
    let mut a = ptr::null_mut();
    let data: Vec<f64> = (0..2 * 192).map(|i| (i % 7) as f64 / 7.0).collect();
    assert_eq!(oslo_map_new(2, 2, data.as_ptr(), data.len(), &mut a), OsloStatus::Ok);
    assert_eq!(oslo_map_new(2, 2, data.as_ptr(), 5, &mut ptr::null_mut()), OsloStatus::ShapeMismatch);
    let (mut order, mut channels, mut npix) = (0u8, 0usize, 0usize);
    assert_eq!(oslo_map_shape(a, &mut order, &mut channels, &mut npix), OsloStatus::Ok);
    assert_eq!((order, channels, npix), (2, 2, 192));

    let mut b = ptr::null_mut();
    assert_eq!(oslo_map_new(2, 2, data.as_ptr(), data.len(), &mut b), OsloStatus::Ok);
    let (mut p, mut len) = (ptr::null_mut(), 0usize);
    assert_eq!(oslo_map_data(b, &mut p, &mut len), OsloStatus::Ok);
    assert_eq!(len, data.len());
    unsafe { std::slice::from_raw_parts_mut(p, len) }.iter_mut().for_each(|v| *v += 0.01);

    let (mut ws, mut plain, mut s) = (0.0, 0.0, 0.0);
    assert_eq!(oslo_wspsnr(a, b, 1.0, &mut ws), OsloStatus::Ok);
    let shifted: Vec<f64> = data.iter().map(|v| v + 0.01).collect();
    assert_eq!(oslo_psnr(data.as_ptr(), shifted.as_ptr(), data.len(), 1.0, &mut plain), OsloStatus::Ok);
    assert_eq!(ws, plain);
    assert_eq!(oslo_spsnr(a, a, 1.0, &mut s), OsloStatus::Ok);
    assert!(s.is_infinite());

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("a.hpxm").to_str().unwrap()).unwrap();
    assert_eq!(oslo_map_write(a, path.as_ptr(), 0), OsloStatus::Ok);
    let mut c = ptr::null_mut();
    assert_eq!(oslo_map_read(path.as_ptr(), &mut c), OsloStatus::Ok);
    assert_eq!(oslo_wspsnr(a, c, 1.0, &mut ws), OsloStatus::Ok);
    assert!(ws.is_infinite());
    let missing = CString::new(dir.path().join("nope.hpxm").to_str().unwrap()).unwrap();
    assert_eq!(oslo_map_read(missing.as_ptr(), &mut c), OsloStatus::Io);

    let erp = vec![0.5; 64 * 32];
    let mut d = ptr::null_mut();
    assert_eq!(oslo_erp_to_healpix(erp.as_ptr(), 64, 32, 1, 3, &mut d), OsloStatus::Ok);
    assert_eq!(oslo_map_shape(d, &mut order, &mut channels, &mut npix), OsloStatus::Ok);
    assert_eq!(npix, 768);

    for m in [a, b, c, d] {
        oslo_map_free(m);
    }
    oslo_map_free(ptr::null_mut());
}

#[test]
fn model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let arch = ArchConfig { input_order: 4, num_stages: 1, n: 4, m: 4, ..ArchConfig::default() };
    let model = CodecModel::new(arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3)).unwrap();
    let file = dir.path().join("m.oslm");
    Checkpoint { model, lambda: 0.01 }.save(&file).unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();

    let mut m = ptr::null_mut();
    assert_eq!(oslo_model_load(path.as_ptr(), &mut m), OsloStatus::Ok);
    let data: Vec<f64> = (0..3 * 3072).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    let mut x = ptr::null_mut();
    assert_eq!(oslo_map_new(4, 3, data.as_ptr(), data.len(), &mut x), OsloStatus::Ok);

    let (mut bytes, mut len, mut rate) = (ptr::null_mut(), 0usize, 0.0);
    assert_eq!(oslo_model_compress(m, x, &mut bytes, &mut len, &mut rate), OsloStatus::Ok);
    assert!(len > 0 && rate >= 0.0);
    let mut y = ptr::null_mut();
    assert_eq!(oslo_model_decompress(m, bytes, len, &mut y), OsloStatus::Ok);
    let mut ws = 0.0;
    assert_eq!(oslo_wspsnr(x, y, 1.0, &mut ws), OsloStatus::Ok);
    assert!(ws.is_finite());

    unsafe { *bytes.add(len / 2) ^= 1 };
    let mut z = ptr::null_mut();
    assert_eq!(oslo_model_decompress(m, bytes, len, &mut z), OsloStatus::Format);
    assert!(z.is_null());
    oslo_bytes_free(bytes, len);

    let mut small = ptr::null_mut();
    assert_eq!(oslo_map_new(3, 3, ptr::null(), 0, &mut small), OsloStatus::Ok);
    assert_eq!(oslo_model_compress(m, small, &mut bytes, &mut len, ptr::null_mut()), OsloStatus::ModelMismatch);

    for h in [x, y, small] {
        oslo_map_free(h);
    }
    oslo_model_free(m);
}
