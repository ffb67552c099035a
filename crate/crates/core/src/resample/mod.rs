//! Equirectangular images, ERP <-> HEALPix resampling and file formats.

mod hpxm;
mod image_io;
mod mollweide;

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::healpix::{ang2pix, angle_between, neighbors, pix2vec, Order, PixelId, SphericalPoint};
use crate::tensor::{MapShape, SphereMap};

pub use hpxm::{read_hpxm, read_hpxm_from, write_hpxm, write_hpxm_to, Dtype, HPXM_MAGIC, HPXM_VERSION};
pub use image_io::{read_image, write_image, BitDepth};
pub use mollweide::{mollweide_inverse, mollweide_render};

/// Planar raster: sample `(c, v, u)` is at `c * height * width + v * width + u`,
/// row `v = 0` at the north pole, column `u = 0` starting at longitude 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ErpImage {
    /// Equirectangular image with `width = 2 * height`.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width != 2 * height {
            return Err(Error::ShapeMismatch(format!("ERP needs width = 2 x height, got {width}x{height}")));
        }
        Self::with_any_aspect(width, height, channels, data)
    }

    pub fn with_any_aspect(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 1 || channels == 0 {
            return Err(Error::ShapeMismatch(format!("invalid image {width}x{height}x{channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain { op: "ErpImage::new", detail: "non-finite sample".into() });
        }
        Ok(ErpImage { width, height, channels, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        ErpImage { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    /// Image from `f(channel, theta, phi)` at pixel centers.
    pub fn from_fn(width: usize, height: usize, channels: usize, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for v in 0..height {
                let theta = PI * (v as f64 + 0.5) / height as f64;
                for u in 0..width {
                    data.push(f(c, theta, 2.0 * PI * (u as f64 + 0.5) / width as f64));
                }
            }
        }
        ErpImage { width, height, channels, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, v: usize, u: usize) -> f64 {
        self.data[(c * self.height + v) * self.width + u]
    }

    /// Bilinear sample of every channel at `(theta, phi)`, wrapping in
    /// longitude and clamping in latitude.
    pub fn sample_bilinear(&self, theta: f64, phi: f64, out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        let u = phi.rem_euclid(2.0 * PI) * w as f64 / (2.0 * PI) - 0.5;
        let v = theta * h as f64 / PI - 0.5;
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = (u - u0, v - v0);
        let ua = (u0 as i64).rem_euclid(w as i64) as usize;
        let ub = (ua + 1) % w;
        let va = (v0 as i64).clamp(0, h as i64 - 1) as usize;
        let vb = (v0 as i64 + 1).clamp(0, h as i64 - 1) as usize;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let top = lerp(self.get(c, va, ua), self.get(c, va, ub), fu);
            let bot = lerp(self.get(c, vb, ua), self.get(c, vb, ub), fu);
            *o = lerp(top, bot, fv);
        }
    }

    /// Box-filter resize: every output pixel averages the input area it covers.
    pub fn downsample_area(&self, width: usize, height: usize) -> Result<ErpImage> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::InvalidArgument(format!(
                "cannot area-downsample {}x{} to {width}x{height}",
                self.width, self.height
            )));
        }
        let wx = area_weights(self.width, width);
        let wy = area_weights(self.height, height);
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.height];
        for &(v_in, v_out, w) in &wy {
            by_row[v_in].push((v_out, w));
        }
        let mut data = vec![0.0; width * height * self.channels];
        let mut row = vec![0.0; width];
        for c in 0..self.channels {
            let out = &mut data[c * width * height..(c + 1) * width * height];
            for (line, targets) in self.plane(c).chunks(self.width).zip(&by_row) {
                row.fill(0.0);
                for &(u_in, u_out, w) in &wx {
                    row[u_out] += w * line[u_in];
                }
                for &(v_out, w) in targets {
                    for (o, r) in out[v_out * width..(v_out + 1) * width].iter_mut().zip(&row) {
                        *o += w * r;
                    }
                }
            }
        }
        ErpImage::with_any_aspect(width, height, self.channels, data)
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// `(input index, output index, weight)` triples of a 1-D box resample.
fn area_weights(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    let mut out = Vec::new();
    for o in 0..n_out {
        let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
        let mut i = a.floor() as usize;
        while (i as f64) < b && i < n_in {
            let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
            if overlap > 0.0 {
                out.push((i, o, overlap / scale));
            }
            i += 1;
        }
    }
    out
}

/// Bilinear resampling onto the pixel centers of a full HEALPix grid.
pub fn erp_to_healpix(img: &ErpImage, order: Order) -> SphereMap {
    let npix = order.npix() as usize;
    let channels = img.channels;
    let mut interleaved = vec![0.0; npix * channels];
    interleaved.par_chunks_mut(channels).enumerate().for_each(|(i, s)| {
        let pt = crate::healpix::pix2ang(PixelId::new_unchecked(order, i as u64));
        img.sample_bilinear(pt.theta, pt.phi, s);
    });
    let mut data = vec![0.0; npix * channels];
    for (i, s) in interleaved.chunks(channels).enumerate() {
        for (c, &v) in s.iter().enumerate() {
            data[c * npix + i] = v;
        }
    }
    SphereMap::from_parts_unchecked(MapShape::full(order, channels), data)
}

/// Interpolation used when reading a HEALPix map at an arbitrary direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HealpixLookup {
    /// Value of the containing pixel.
    Nearest,
    /// Inverse-distance weights over the 4 closest centers among the
    /// containing pixel and its neighbors.
    #[default]
    FourNearest,
}

/// Samples every channel of a full-sphere map at `pt`.
pub fn sample_healpix(m: &SphereMap, pt: SphericalPoint, lookup: HealpixLookup, out: &mut [f64]) {
    let order = m.order();
    let p = ang2pix(pt, order);
    let npix = m.npix();
    if lookup == HealpixLookup::Nearest || order.value() == 0 {
        for (c, o) in out.iter_mut().enumerate().take(m.channels()) {
            *o = m.data()[c * npix + p.index() as usize];
        }
        return;
    }
    let target = pt.to_vec();
    let mut cand: Vec<(f64, usize)> = std::iter::once(p)
        .chain(neighbors(p).neighbor.into_iter().flatten())
        .map(|q| (angle_between(target, pix2vec(q)), q.index() as usize))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(4);
    if cand[0].0 < 1e-12 {
        let i = cand[0].1;
        for (c, o) in out.iter_mut().enumerate().take(m.channels()) {
            *o = m.data()[c * npix + i];
        }
        return;
    }
    let total: f64 = cand.iter().map(|(d, _)| 1.0 / d).sum();
    for (c, o) in out.iter_mut().enumerate().take(m.channels()) {
        *o = cand.iter().map(|&(d, i)| m.data()[c * npix + i] / d).sum::<f64>() / total;
    }
}

/// Renders a full-sphere map as a `width x height` equirectangular image.
pub fn healpix_to_erp(m: &SphereMap, width: usize, height: usize, lookup: HealpixLookup) -> Result<ErpImage> {
    if m.domain() != crate::tensor::Domain::Full {
        return Err(Error::InvalidArgument("only full-sphere maps can be rendered".into()));
    }
    let channels = m.channels();
    let mut img = ErpImage::with_any_aspect(width, height, channels, vec![0.0; width * height * channels])?;
    let rows: Vec<Vec<f64>> = (0..height)
        .into_par_iter()
        .map(|v| {
            let theta = PI * (v as f64 + 0.5) / height as f64;
            let mut row = vec![0.0; width * channels];
            let mut s = vec![0.0; channels];
            for u in 0..width {
                let phi = 2.0 * PI * (u as f64 + 0.5) / width as f64;
                sample_healpix(m, SphericalPoint { theta, phi }, lookup, &mut s);
                for c in 0..channels {
                    row[c * width + u] = s[c];
                }
            }
            row
        })
        .collect();
    for (v, row) in rows.iter().enumerate() {
        for c in 0..channels {
            let at = (c * height + v) * width;
            img.data[at..at + width].copy_from_slice(&row[c * width..(c + 1) * width]);
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_gives_constant_map() {
        let img = ErpImage::from_fn(64, 32, 2, |c, _, _| 0.25 + c as f64);
        let m = erp_to_healpix(&img, Order::new(3).unwrap());
        assert_eq!(m.npix(), 768);
        assert!(m.channel(0).iter().all(|&v| v == 0.25));
        assert!(m.channel(1).iter().all(|&v| v == 1.25));
    }

    #[test]
    fn constant_map_gives_constant_image() {
        let m = SphereMap::constant(MapShape::full(Order::new(2).unwrap(), 1), 0.5);
        for lookup in [HealpixLookup::Nearest, HealpixLookup::FourNearest] {
            let img = healpix_to_erp(&m, 40, 20, lookup).unwrap();
            assert_eq!((img.width(), img.height()), (40, 20));
            assert!(img.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn aspect_is_enforced() {
        assert!(ErpImage::new(10, 4, 1, vec![0.0; 40]).is_err());
        assert!(ErpImage::with_any_aspect(10, 4, 1, vec![0.0; 40]).is_ok());
    }

    #[test]
    fn bilinear_wraps_longitude() {
        let img = ErpImage::from_fn(8, 4, 1, |_, _, phi| if phi < PI { 1.0 } else { 0.0 });
        let mut s = [0.0];
        img.sample_bilinear(PI / 2.0, 0.0, &mut s);
        assert!((s[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn area_downsample_averages() {
        let img = ErpImage::from_fn(8, 4, 1, |_, _, _| 0.0);
        let mut img = img;
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        let small = img.downsample_area(4, 2).unwrap();
        assert_eq!(small.get(0, 0, 0), (0.0 + 1.0 + 8.0 + 9.0) / 4.0);
        let odd = img.downsample_area(3, 3).unwrap();
        let total: f64 = img.data().iter().sum::<f64>() / 32.0;
        assert!((odd.data().iter().sum::<f64>() / 9.0 - total).abs() < 1e-12);
    }
}
