//! n-hop stacks, aggregation and strided subsampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::healpix::stride_levels;
use crate::tensor::{MapShape, SphereMap, Tape, Value, Var};

use super::conv::{conv_strided, Kernel, KernelVar};

/// How the outputs of an n-hop stack are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    Concatenation,
    Max,
    #[default]
    Addition,
}

/// Levels removed by stride `s` on a map of `shape`.
pub(crate) fn levels_for(shape: MapShape, stride: usize) -> Result<u8> {
    let levels = stride_levels(shape.order, stride)?;
    if shape.npix() % (stride * stride) != 0 {
        return Err(Error::InvalidStride(stride));
    }
    Ok(levels)
}

/// Keeps every `s^2`-th pixel: output `j` is input `j * s^2`.
pub fn strided_subsample(x: Var<'_>, stride: usize) -> Result<Var<'_>> {
    let shape = x.map_shape()?;
    let levels = levels_for(shape, stride)?;
    subsample_levels(x, levels)
}

pub(crate) fn subsample_levels(x: Var<'_>, levels: u8) -> Result<Var<'_>> {
    if levels == 0 {
        return Ok(x);
    }
    let shape = x.map_shape()?;
    let out_shape = shape.coarsen(levels)?;
    let step = 1usize << (2 * levels as u32);
    let (n_in, n_out) = (shape.npix(), out_shape.npix());
    let xv = x.value();
    let mut y = Vec::with_capacity(out_shape.len());
    for d in 0..shape.channels {
        let ch = &xv.data()[d * n_in..(d + 1) * n_in];
        y.extend(ch.iter().step_by(step).copied());
    }
    let out = Value::Map(SphereMap::from_parts_unchecked(out_shape, y));
    Ok(x.tape().record(out, &[x], move |g, _| {
        let mut gx = vec![0.0; shape.len()];
        for d in 0..shape.channels {
            for j in 0..n_out {
                gx[d * n_in + j * step] = g[d * n_out + j];
            }
        }
        vec![Some(gx)]
    }))
}

/// Stacks maps of one shape along the channel axis.
pub fn concat_channels<'t>(xs: &[Var<'t>]) -> Result<Var<'t>> {
    let first = xs.first().ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
    let base = first.map_shape()?;
    let mut sizes = Vec::with_capacity(xs.len());
    let mut data = Vec::new();
    for x in xs {
        let s = x.map_shape()?;
        if s.with_channels(base.channels) != base {
            return Err(Error::ShapeMismatch(format!("cannot concatenate {s:?} with {base:?}")));
        }
        sizes.push(s.len());
        data.extend_from_slice(x.value().data());
    }
    let channels = sizes.iter().sum::<usize>() / base.npix();
    let out = Value::Map(SphereMap::from_parts_unchecked(base.with_channels(channels), data));
    Ok(first.tape().record(out, xs, move |g, needs| {
        let mut at = 0;
        sizes
            .iter()
            .zip(needs)
            .map(|(&n, &need)| {
                let part = need.then(|| g[at..at + n].to_vec());
                at += n;
                part
            })
            .collect()
    }))
}

/// Pixelwise maximum; ties go to the earliest input.
pub fn elementwise_max<'t>(xs: &[Var<'t>]) -> Result<Var<'t>> {
    let first = xs.first().ok_or_else(|| Error::InvalidArgument("max of nothing".into()))?;
    let shape = first.map_shape()?;
    for x in &xs[1..] {
        if x.map_shape()? != shape {
            return Err(Error::ShapeMismatch("max aggregation needs equal shapes".into()));
        }
    }
    let values: Vec<_> = xs.iter().map(|x| x.value()).collect();
    let n = shape.len();
    let mut y = values[0].data().to_vec();
    let mut arg = vec![0u16; n];
    for (l, v) in values.iter().enumerate().skip(1) {
        for (i, &a) in v.data().iter().enumerate() {
            if a > y[i] {
                y[i] = a;
                arg[i] = l as u16;
            }
        }
    }
    let out = Value::Map(SphereMap::from_parts_unchecked(shape, y));
    let count = xs.len();
    Ok(first.tape().record(out, xs, move |g, needs| {
        (0..count)
            .map(|l| {
                needs[l].then(|| {
                    g.iter().zip(&arg).map(|(&g, &a)| if a as usize == l { g } else { 0.0 }).collect()
                })
            })
            .collect()
    }))
}

/// Sum of maps of one shape.
pub fn elementwise_sum<'t>(xs: &[Var<'t>]) -> Result<Var<'t>> {
    let (first, rest) = xs.split_first().ok_or_else(|| Error::InvalidArgument("sum of nothing".into()))?;
    rest.iter().try_fold(*first, |acc, &x| acc.add(x))
}

/// Chains `kernels` as 1-hop convolutions. Intermediate layers run at
/// stride 1 and the last at `stride`; earlier outputs are subsampled to
/// the same visiting set and combined with the last by `mode`.
pub fn conv_nhop<'t>(x: Var<'t>, kernels: &[KernelVar<'t>], mode: AggregationMode, stride: usize) -> Result<Var<'t>> {
    let (last, inner) = kernels.split_last().ok_or_else(|| Error::InvalidArgument("n-hop needs at least one kernel".into()))?;
    let levels = levels_for(x.map_shape()?, stride)?;
    if matches!(mode, AggregationMode::Max | AggregationMode::Addition) {
        if let Some(k) = kernels.iter().find(|k| k.l_out != last.l_out) {
            return Err(Error::ShapeMismatch(format!(
                "{mode:?} aggregation needs equal channel counts, got {} and {}",
                k.l_out, last.l_out
            )));
        }
    }
    let mut hops = Vec::with_capacity(kernels.len());
    let mut z = x;
    for k in inner {
        z = conv_strided(z, k, 0)?;
        hops.push(z);
    }
    let zn = conv_strided(z, last, levels)?;
    if hops.is_empty() {
        return Ok(zn);
    }
    let mut stack = hops.into_iter().map(|h| subsample_levels(h, levels)).collect::<Result<Vec<_>>>()?;
    stack.push(zn);
    match mode {
        AggregationMode::Concatenation => concat_channels(&stack),
        AggregationMode::Max => elementwise_max(&stack),
        AggregationMode::Addition => elementwise_sum(&stack),
    }
}

/// Eager [`conv_nhop`] on a map.
pub fn conv_nhop_map(x: &SphereMap, kernels: &[Kernel], mode: AggregationMode, stride: usize) -> Result<SphereMap> {
    let tape = Tape::new();
    let ks: Vec<_> = kernels.iter().map(|k| k.constant(&tape)).collect();
    conv_nhop(tape.constant_map(x.clone()), &ks, mode, stride)?.to_map()
}

/// Eager [`strided_subsample`] on a map.
pub fn strided_subsample_map(x: &SphereMap, stride: usize) -> Result<SphereMap> {
    let tape = Tape::new();
    strided_subsample(tape.constant_map(x.clone()), stride)?.to_map()
}
