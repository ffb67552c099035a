//! Pixel shuffle and sub-pixel convolution.
//!
//! Channel `d * 4^n + m` of parent `p` becomes channel `d` of child
//! `p * 4^n + m`.

use crate::error::{Error, Result};
use crate::tensor::{SphereMap, Tape, Value, Var};

use super::conv::{Kernel, KernelVar};
use super::hop::{conv_nhop, AggregationMode};

fn permute(src: &[f64], d_out: usize, block: usize, npix: usize, forward: bool) -> Vec<f64> {
    // forward: in [d*block+m][p] -> out [d][p*block+m]
    let mut dst = vec![0.0; src.len()];
    for d in 0..d_out {
        for m in 0..block {
            for p in 0..npix {
                let a = (d * block + m) * npix + p;
                let b = d * npix * block + p * block + m;
                if forward {
                    dst[b] = src[a];
                } else {
                    dst[a] = src[b];
                }
            }
        }
    }
    dst
}

/// Moves `4^levels` channel groups onto the children, raising the order by `levels`.
pub fn pixel_shuffle(x: Var<'_>, levels: u8) -> Result<Var<'_>> {
    let shape = x.map_shape()?;
    let block = 1usize << (2 * levels as u32);
    if shape.channels % block != 0 {
        return Err(Error::ShapeMismatch(format!(
            "pixel shuffle by {levels} levels needs a multiple of {block} channels, got {}",
            shape.channels
        )));
    }
    if levels == 0 {
        return Ok(x);
    }
    let d_out = shape.channels / block;
    let out_shape = shape.refine(levels)?.with_channels(d_out);
    let npix = shape.npix();
    let y = permute(x.value().data(), d_out, block, npix, true);
    let out = Value::Map(SphereMap::from_parts_unchecked(out_shape, y));
    Ok(x.tape().record(out, &[x], move |g, _| vec![Some(permute(g, d_out, block, npix, false))]))
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: Var<'_>, levels: u8) -> Result<Var<'_>> {
    let shape = x.map_shape()?;
    if levels == 0 {
        return Ok(x);
    }
    let block = 1usize << (2 * levels as u32);
    let out_shape = shape.coarsen(levels)?.with_channels(shape.channels * block);
    let (d, npix) = (shape.channels, out_shape.npix());
    let y = permute(x.value().data(), d, block, npix, false);
    let out = Value::Map(SphereMap::from_parts_unchecked(out_shape, y));
    Ok(x.tape().record(out, &[x], move |g, _| vec![Some(permute(g, d, block, npix, true))]))
}

/// n-hop convolution at the input order followed by a pixel shuffle.
pub fn spconv<'t>(x: Var<'t>, kernels: &[KernelVar<'t>], mode: AggregationMode, levels: u8) -> Result<Var<'t>> {
    pixel_shuffle(conv_nhop(x, kernels, mode, 1)?, levels)
}

pub fn pixel_shuffle_map(x: &SphereMap, levels: u8) -> Result<SphereMap> {
    let tape = Tape::new();
    pixel_shuffle(tape.constant_map(x.clone()), levels)?.to_map()
}

pub fn pixel_unshuffle_map(x: &SphereMap, levels: u8) -> Result<SphereMap> {
    let tape = Tape::new();
    pixel_unshuffle(tape.constant_map(x.clone()), levels)?.to_map()
}

pub fn spconv_map(x: &SphereMap, kernels: &[Kernel], mode: AggregationMode, levels: u8) -> Result<SphereMap> {
    let tape = Tape::new();
    let ks: Vec<_> = kernels.iter().map(|k| k.constant(&tape)).collect();
    spconv(tape.constant_map(x.clone()), &ks, mode, levels)?.to_map()
}
