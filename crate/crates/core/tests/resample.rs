mod common;

use std::collections::HashSet;

use common::*;
use oslo::healpix::{ang2pix, pix2ang, SphericalPoint};
use oslo::metrics::psnr;
use oslo::resample::*;
use oslo::tensor::{MapShape, SphereMap};
use rand::Rng;

#[test]
fn cos_latitude_matches_analytic_values() {
    let img = ErpImage::from_fn(512, 256, 1, |_, theta, _| theta.sin());
    let m = erp_to_healpix(&img, order(5));
    assert_eq!(m.npix(), 12_288);
    let worst = (0..m.npix())
        .map(|i| {
            let pt = pix2ang(oslo::healpix::PixelId::new(order(5), i as u64).unwrap());
            (m.data()[i] - pt.theta.sin()).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn harmonic_round_trip_at_order_8() {
    let img = harmonic_erp(1024, 512, 1);
    let m = erp_to_healpix(&img, order(8));
    let back = healpix_to_erp(&m, 1024, 512, HealpixLookup::FourNearest).unwrap();
    assert_eq!((back.width(), back.height()), (1024, 512));
    let db = psnr(img.data(), back.data(), 1.0).unwrap();
    println!("round trip PSNR {db:.4} dB");
    assert!(db > 40.0);
    assert!(db > ROUND_TRIP_PSNR_DB - 1.0, "{db} vs frozen {ROUND_TRIP_PSNR_DB}");
}

#[test]
fn forward_resampling_is_linear() {
    let mut r = rng(3);
    let a = ErpImage::from_fn(64, 32, 2, |_, _, _| 0.0);
    let noise = |r: &mut rand_chacha::ChaCha8Rng| {
        let mut i = a.clone();
        i.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
        i
    };
    let (x, y) = (noise(&mut r), noise(&mut r));
    let (alpha, beta) = (0.7, -1.3);
    let mut z = x.clone();
    z.data_mut().iter_mut().zip(y.data()).for_each(|(a, b)| *a = alpha * *a + beta * b);
    let (mx, my, mz) = (erp_to_healpix(&x, order(3)), erp_to_healpix(&y, order(3)), erp_to_healpix(&z, order(3)));
    let combo: Vec<f64> = mx.data().iter().zip(my.data()).map(|(a, b)| alpha * a + beta * b).collect();
    assert!(max_abs_diff(&combo, mz.data()) < 1e-12);
}

/// Value of the ERP pixel containing each HEALPix center.
fn erp_nearest_to_healpix(img: &ErpImage, o: oslo::healpix::Order) -> SphereMap {
    let (w, h) = (img.width(), img.height());
    SphereMap::from_fn(MapShape::full(o, img.channels()), |c, p| {
        let pt = pix2ang(p);
        let v = ((pt.theta / std::f64::consts::PI * h as f64) as usize).min(h - 1);
        let u = ((pt.phi.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * w as f64) as usize).min(w - 1);
        img.get(c, v, u)
    })
}

#[test]
fn nearest_inverse_is_idempotent() {
    let o = order(3);
    let project = |img: &ErpImage| healpix_to_erp(&erp_nearest_to_healpix(img, o), 1024, 512, HealpixLookup::Nearest).unwrap();
    let start = ErpImage::from_fn(1024, 512, 1, |_, theta, phi| (3.0 * theta).sin() * phi.cos());
    let once = project(&start);
    let twice = project(&once);
    assert_eq!(once, twice);
    let m = random_map(3, 1, &mut rng(1));
    let a = healpix_to_erp(&m, 1024, 512, HealpixLookup::Nearest).unwrap();
    assert_eq!(erp_nearest_to_healpix(&a, o), m);
}

#[test]
fn mollweide_index_map_has_one_region_per_pixel() {
    let m = SphereMap::from_fn(MapShape::full(order(1), 1), |_, p| p.index() as f64 + 1.0);
    let img = mollweide_render(&m, 800).unwrap();
    let values: HashSet<u64> = img.data().iter().filter(|&&v| v > 0.0).map(|v| v.to_bits()).collect();
    assert_eq!(values.len(), 48);
}

#[test]
fn north_pole_marker_renders_top_center() {
    let o = order(4);
    let pole = ang2pix(SphericalPoint::new(0.0, 0.0), o).index() as usize;
    let mut m = SphereMap::zeros(MapShape::full(o, 1));
    for d in 0..4 {
        // the four pixels touching the pole
        let p = ang2pix(SphericalPoint::new(1e-3, (d as f64 + 0.5) * std::f64::consts::FRAC_PI_2), o);
        m.data_mut()[p.index() as usize] = 1.0;
    }
    assert!(m.data()[pole] == 1.0);
    let img = mollweide_render(&m, 400).unwrap();
    let (w, h) = (img.width(), img.height());
    let lit: Vec<(usize, usize)> =
        (0..h).flat_map(|v| (0..w).map(move |u| (v, u))).filter(|&(v, u)| img.get(0, v, u) == 1.0).collect();
    assert!(!lit.is_empty());
    for (v, u) in lit {
        assert!(v < h / 8, "row {v}");
        assert!((u as f64 - w as f64 / 2.0).abs() < w as f64 / 4.0, "column {u}");
    }
}

#[test]
fn hpxm_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let m = random_map(3, 3, &mut rng(8));
    let path = dir.path().join("m.hpxm");
    write_hpxm(&path, &m, Dtype::F64).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(read_hpxm(&path).unwrap(), m);
    write_hpxm(&path, &read_hpxm(&path).unwrap(), Dtype::F64).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    write_hpxm(&path, &m, Dtype::F32).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize - 9, 4 * 3 * 768);
}

#[test]
fn png_full_scale_reads_as_one() {
    let dir = tempfile::tempdir().unwrap();
    let img = ErpImage::from_fn(16, 8, 3, |c, theta, _| if c == 0 { 1.0 } else { theta / std::f64::consts::PI });
    let path = dir.path().join("i.png");
    write_image(&path, &img, BitDepth::Eight).unwrap();
    let back = read_image(&path).unwrap();
    assert!(back.plane(0).iter().all(|&v| v == 1.0));
    assert!(max_abs_diff(back.data(), img.data()) <= 0.5 / 255.0 + 1e-12);
    write_image(&path, &img, BitDepth::Sixteen).unwrap();
    assert!(max_abs_diff(read_image(&path).unwrap().data(), img.data()) <= 0.5 / 65535.0 + 1e-12);
}
