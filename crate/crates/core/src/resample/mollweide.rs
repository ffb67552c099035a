use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::healpix::{ang2pix, SphericalPoint};
use crate::tensor::{Domain, SphereMap};

use super::ErpImage;

/// Direction seen at normalized Mollweide coordinates `x in [-2, 2]`,
/// `y in [-1, 1]` (longitude 0 at the center, increasing to the right),
/// or `None` outside the ellipse.
pub fn mollweide_inverse(x: f64, y: f64) -> Option<SphericalPoint> {
    if x * x / 4.0 + y * y > 1.0 {
        return None;
    }
    // auxiliary angle of the standard projection
    let aux = y.clamp(-1.0, 1.0).asin();
    let sin_lat = ((2.0 * aux + (2.0 * aux).sin()) / PI).clamp(-1.0, 1.0);
    let lat = sin_lat.asin();
    let lon = if aux.cos() < 1e-12 { 0.0 } else { PI * x / (2.0 * aux.cos()) };
    debug_assert!(lon.abs() <= PI + 1e-9);
    Some(SphericalPoint::new(FRAC_PI_2 - lat, lon))
}

/// Renders a 1- or 3-channel full-sphere map into a `width x width/2`
/// raster by nearest-pixel lookup. Samples outside the ellipse are 0.
pub fn mollweide_render(m: &SphereMap, width: usize) -> Result<ErpImage> {
    if m.channels() != 1 && m.channels() != 3 {
        return Err(Error::InvalidArgument(format!("cannot render {} channels", m.channels())));
    }
    if m.domain() != Domain::Full {
        return Err(Error::InvalidArgument("only full-sphere maps can be rendered".into()));
    }
    let height = (width / 2).max(1);
    let mut img = ErpImage::with_any_aspect(width.max(2), height, m.channels(), vec![0.0; width.max(2) * height * m.channels()])?;
    let (w, h) = (img.width(), img.height());
    let npix = m.npix();
    for v in 0..h {
        let y = 1.0 - 2.0 * (v as f64 + 0.5) / h as f64;
        for u in 0..w {
            let x = 4.0 * (u as f64 + 0.5) / w as f64 - 2.0;
            let Some(pt) = mollweide_inverse(x, y) else { continue };
            let p = ang2pix(pt, m.order()).index() as usize;
            for c in 0..m.channels() {
                img.data_mut()[(c * h + v) * w + u] = m.data()[c * npix + p];
            }
        }
    }
    Ok(img)
}
