//! Hierarchical pooling and nearest-neighbor upsampling.
//!
//! The `4^n` descendants of a pixel are contiguous in nested order, so both
//! directions reduce to fixed-size block operations.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{SphereMap, Tape, Value, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Average,
    Max,
}

/// Merges the `4^levels` descendants of every coarse pixel.
pub fn pool(x: Var<'_>, kind: PoolKind, levels: u8) -> Result<Var<'_>> {
    let shape = x.map_shape()?;
    let out_shape = shape.coarsen(levels)?;
    if levels == 0 {
        return Ok(x);
    }
    let block = 1usize << (2 * levels as u32);
    let xv = x.value();
    let n_out = out_shape.len();
    match kind {
        PoolKind::Average => {
            let inv = 1.0 / block as f64;
            let y = xv.data().chunks(block).map(|c| c.iter().sum::<f64>() * inv).collect();
            let out = Value::Map(SphereMap::from_parts_unchecked(out_shape, y));
            Ok(x.tape().record(out, &[x], move |g, _| {
                vec![Some(g.iter().flat_map(|&g| std::iter::repeat(g * inv).take(block)).collect())]
            }))
        }
        PoolKind::Max => {
            let mut arg = Vec::with_capacity(n_out);
            let mut y = Vec::with_capacity(n_out);
            for (b, c) in xv.data().chunks(block).enumerate() {
                let (i, m) = c
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(ai, am), (i, &v)| if v > am { (i, v) } else { (ai, am) });
                arg.push(b * block + i);
                y.push(m);
            }
            let out = Value::Map(SphereMap::from_parts_unchecked(out_shape, y));
            let len = shape.len();
            Ok(x.tape().record(out, &[x], move |g, _| {
                let mut gx = vec![0.0; len];
                for (&a, &g) in arg.iter().zip(g) {
                    gx[a] = g;
                }
                vec![Some(gx)]
            }))
        }
    }
}

/// Copies every pixel to its `4^levels` descendants.
pub fn upsample_nearest(x: Var<'_>, levels: u8) -> Result<Var<'_>> {
    let shape = x.map_shape()?;
    let out_shape = shape.refine(levels)?;
    if levels == 0 {
        return Ok(x);
    }
    let block = 1usize << (2 * levels as u32);
    let y = x.value().data().iter().flat_map(|&v| std::iter::repeat(v).take(block)).collect();
    let out = Value::Map(SphereMap::from_parts_unchecked(out_shape, y));
    Ok(x.tape().record(out, &[x], move |g, _| vec![Some(g.chunks(block).map(|c| c.iter().sum()).collect())]))
}

pub fn pool_map(x: &SphereMap, kind: PoolKind, levels: u8) -> Result<SphereMap> {
    let tape = Tape::new();
    pool(tape.constant_map(x.clone()), kind, levels)?.to_map()
}

pub fn upsample_nearest_map(x: &SphereMap, levels: u8) -> Result<SphereMap> {
    let tape = Tape::new();
    upsample_nearest(tape.constant_map(x.clone()), levels)?.to_map()
}
