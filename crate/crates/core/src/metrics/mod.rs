//! Quality metrics for spherical signals.

mod bd;
mod icosphere;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::healpix::SphericalPoint;
use crate::resample::{sample_healpix, ErpImage, HealpixLookup};
use crate::tensor::{Domain, SphereMap};

pub use bd::{bd_rate, RdCurve, RdPoint};
pub use icosphere::{icosphere, uniform_points, UNIFORM_POINT_COUNT};

/// Value written to CSV/JSON for an infinite score.
pub const DB_CAP: f64 = 999.0;

/// `10 log10(peak^2 / mse)`, `+inf` when `mse == 0`.
pub fn db_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Score with infinities replaced by [`DB_CAP`].
pub fn capped(db: f64) -> f64 {
    db.min(DB_CAP)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Plain PSNR over all samples.
pub fn psnr(reference: &[f64], test: &[f64], peak: f64) -> Result<f64> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(Error::ShapeMismatch(format!("PSNR of {} vs {} samples", reference.len(), test.len())));
    }
    Ok(db_from_mse(mse(reference, test), peak))
}

/// WS-PSNR on HEALPix: pixels have equal area, so this is plain PSNR.
pub fn wspsnr_healpix(reference: &SphereMap, test: &SphereMap, peak: f64) -> Result<f64> {
    if reference.shape() != test.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", reference.shape(), test.shape())));
    }
    psnr(reference.data(), test.data(), peak)
}

/// Latitude-weighted PSNR on equirectangular images, row weight
/// `cos((v + 0.5 - H/2) pi / H)`.
pub fn wspsnr_erp(reference: &ErpImage, test: &ErpImage, peak: f64) -> Result<f64> {
    let dims = |i: &ErpImage| (i.width(), i.height(), i.channels());
    if dims(reference) != dims(test) {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", dims(reference), dims(test))));
    }
    let (w, h, c) = dims(reference);
    let weights: Vec<f64> = (0..h)
        .map(|v| ((v as f64 + 0.5 - h as f64 / 2.0) * std::f64::consts::PI / h as f64).cos())
        .collect();
    let mut num = 0.0;
    for ch in 0..c {
        for (v, &wv) in weights.iter().enumerate() {
            let at = (ch * h + v) * w;
            let row: f64 = reference.data()[at..at + w]
                .iter()
                .zip(&test.data()[at..at + w])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            num += wv * row;
        }
    }
    let den = weights.iter().sum::<f64>() * (w * c) as f64;
    Ok(db_from_mse(num / den, peak))
}

/// A signal that can be evaluated at any direction.
#[derive(Debug, Clone, Copy)]
pub enum SphereSignal<'a> {
    Erp(&'a ErpImage),
    Healpix(&'a SphereMap, HealpixLookup),
}

impl SphereSignal<'_> {
    pub fn channels(&self) -> usize {
        match self {
            SphereSignal::Erp(i) => i.channels(),
            SphereSignal::Healpix(m, _) => m.channels(),
        }
    }

    pub fn sample(&self, pt: SphericalPoint, out: &mut [f64]) {
        match self {
            SphereSignal::Erp(i) => i.sample_bilinear(pt.theta, pt.phi, out),
            SphereSignal::Healpix(m, lookup) => sample_healpix(m, pt, *lookup, out),
        }
    }
}

/// S-PSNR on the uniform point set: both signals are interpolated at every
/// point and the squared error is averaged over points and channels.
pub fn spsnr(reference: SphereSignal<'_>, test: SphereSignal<'_>, peak: f64) -> Result<f64> {
    spsnr_on(uniform_points(), reference, test, peak)
}

pub fn spsnr_on(points: &[SphericalPoint], reference: SphereSignal<'_>, test: SphereSignal<'_>, peak: f64) -> Result<f64> {
    let c = reference.channels();
    if c != test.channels() {
        return Err(Error::ShapeMismatch(format!("{c} vs {} channels", test.channels())));
    }
    for s in [reference, test] {
        if let SphereSignal::Healpix(m, _) = s {
            if m.domain() != Domain::Full {
                return Err(Error::InvalidArgument("S-PSNR needs full-sphere maps".into()));
            }
        }
    }
    let total: f64 = points
        .par_chunks(4096)
        .map(|chunk| {
            let (mut a, mut b) = (vec![0.0; c], vec![0.0; c]);
            let mut acc = 0.0;
            for &pt in chunk {
                reference.sample(pt, &mut a);
                test.sample(pt, &mut b);
                acc += a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(db_from_mse(total / (points.len() * c) as f64, peak))
}

/// One row of the metrics CSV; scores not computed are left empty.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub image_id: String,
    pub rate_bytes: Option<u64>,
    pub psnr: Option<f64>,
    pub wspsnr: Option<f64>,
    pub spsnr: Option<f64>,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "image_id,rate_bytes,psnr,wspsnr,spsnr";

    pub fn to_csv(&self) -> String {
        let db = |v: Option<f64>| v.map(|v| format!("{:.2}", capped(v))).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.image_id,
            self.rate_bytes.map(|r| r.to_string()).unwrap_or_default(),
            db(self.psnr),
            db(self.wspsnr),
            db(self.spsnr)
        )
    }

    /// Copy with infinite scores capped, for JSON output.
    pub fn capped(&self) -> MetricsRow {
        let c = |v: Option<f64>| v.map(capped);
        MetricsRow { psnr: c(self.psnr), wspsnr: c(self.wspsnr), spsnr: c(self.spsnr), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::healpix::Order;
    use crate::tensor::MapShape;

    #[test]
    fn identical_is_infinite_and_capped() {
        let a = [0.1, 0.2, 0.3];
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(capped(f64::INFINITY), 999.0);
    }

    #[test]
    fn constant_offset() {
        let a = vec![0.3; 100];
        let b = vec![0.35; 100];
        let expect = 10.0 * (1.0f64 / (0.05f64 * 0.05)).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn ws_weighting_favors_polar_errors() {
        let r = ErpImage::from_fn(16, 8, 1, |_, _, _| 0.5);
        let mut top = r.clone();
        let mut mid = r.clone();
        top.data_mut()[0] += 0.1;
        mid.data_mut()[4 * 16] += 0.1;
        assert!(wspsnr_erp(&r, &top, 1.0).unwrap() > wspsnr_erp(&r, &mid, 1.0).unwrap());
        let mut uniform = r.clone();
        uniform.data_mut().iter_mut().for_each(|v| *v += 0.02);
        let ws = wspsnr_erp(&r, &uniform, 1.0).unwrap();
        let plain = psnr(r.data(), uniform.data(), 1.0).unwrap();
        assert!((ws - plain).abs() < 1e-9);
        assert!(wspsnr_erp(&r, &ErpImage::zeros(8, 4, 1), 1.0).is_err());
    }

    #[test]
    fn healpix_ws_is_psnr_and_latitude_free() {
        let shape = MapShape::full(Order::new(2).unwrap(), 1);
        let r = SphereMap::constant(shape, 0.5);
        let scores: Vec<f64> = [0usize, 95, 191]
            .iter()
            .map(|&i| {
                let mut t = r.clone();
                t.data_mut()[i] += 0.2;
                let ws = wspsnr_healpix(&r, &t, 1.0).unwrap();
                assert_eq!(ws, psnr(r.data(), t.data(), 1.0).unwrap());
                ws
            })
            .collect();
        assert!(scores.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn csv_row_caps() {
        let row = MetricsRow {
            image_id: "a".into(),
            rate_bytes: Some(10),
            psnr: Some(30.0),
            wspsnr: Some(f64::INFINITY),
            spsnr: Some(31.256),
        };
        assert_eq!(row.to_csv(), "a,10,30.00,999.00,31.26");
        assert_eq!(MetricsRow { psnr: None, rate_bytes: None, ..row }.to_csv(), "a,,,999.00,31.26");
    }
}
