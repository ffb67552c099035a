//! PNG and PPM/PGM reading and writing. Samples map to `[0, 1]` by
//! `value / (2^bits - 1)`; no color-space conversion is applied.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::Result;

use super::ErpImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Reads a grayscale (1 channel) or color (3 channels) image; alpha is dropped.
pub fn read_image(path: impl AsRef<Path>) -> Result<ErpImage> {
    let img = image::open(path)?;
    let sixteen = img.color().bytes_per_pixel() / img.color().channel_count() > 1;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let channels = if img.color().has_color() { 3 } else { 1 };
    let interleaved: Vec<f64> = match (channels, sixteen) {
        (1, false) => img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        (1, true) => img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        (_, false) => img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        (_, true) => img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
    };
    let mut data = vec![0.0; interleaved.len()];
    for (i, px) in interleaved.chunks(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * w * h + i] = v;
        }
    }
    ErpImage::with_any_aspect(w, h, channels, data)
}

/// Writes a 1- or 3-channel image; the format follows the file extension.
/// Values are clamped to `[0, 1]` and rounded.
pub fn write_image(path: impl AsRef<Path>, img: &ErpImage, depth: BitDepth) -> Result<()> {
    let (w, h, channels) = (img.width(), img.height(), img.channels());
    if channels != 1 && channels != 3 {
        return Err(crate::Error::InvalidArgument(format!("cannot write a {channels}-channel image")));
    }
    let n = w * h;
    let quant = |v: f64| (v.clamp(0.0, 1.0) * depth.max()).round();
    let interleaved: Vec<f64> = (0..n * channels).map(|k| quant(img.data()[(k % channels) * n + k / channels])).collect();
    let (wu, hu) = (w as u32, h as u32);
    let dynamic = match (channels, depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(wu, hu, interleaved.iter().map(|&v| v as u8).collect()).unwrap(),
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(wu, hu, interleaved.iter().map(|&v| v as u16).collect()).unwrap(),
        ),
        (_, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(wu, hu, interleaved.iter().map(|&v| v as u8).collect()).unwrap(),
        ),
        (_, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(wu, hu, interleaved.iter().map(|&v| v as u16).collect()).unwrap(),
        ),
    };
    dynamic.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_both_depths() {
        let dir = tempfile::tempdir().unwrap();
        let img = ErpImage::from_fn(8, 4, 3, |c, t, p| ((c as f64 + t + p) * 0.37).fract());
        for (depth, name, max) in [(BitDepth::Eight, "a.png", 255.0), (BitDepth::Sixteen, "b.png", 65535.0)] {
            let path = dir.path().join(name);
            write_image(&path, &img, depth).unwrap();
            let back = read_image(&path).unwrap();
            assert_eq!(back.channels(), 3);
            for (a, b) in back.data().iter().zip(img.data()) {
                assert!((a - b).abs() <= 0.5 / max + 1e-12);
            }
        }
    }

    #[test]
    fn full_scale_maps_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.ppm");
        let img = ErpImage::from_fn(4, 2, 1, |_, _, _| 1.0);
        write_image(&path, &img, BitDepth::Eight).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert!(back.data().iter().all(|&v| v == 1.0));
    }
}
