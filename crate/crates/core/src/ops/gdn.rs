//! Generalized divisive normalization, applied pixel-wise across channels.
//!
//! `y_c = x_c / sqrt(beta_c + sum_j gamma[c][j] * x_j^2)`; the inverse
//! form multiplies by the same root.

use crate::error::{Error, Result};
use crate::tensor::{Parameter, SphereMap, Tape, Value, Var};

pub const BETA_MIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GdnParams {
    pub channels: usize,
    pub beta: Vec<f64>,
    /// Row-major `[c][j]`.
    pub gamma: Vec<f64>,
}

impl GdnParams {
    /// `beta = 1`, `gamma = 0.1 * I`.
    pub fn init(channels: usize) -> Self {
        let mut gamma = vec![0.0; channels * channels];
        for c in 0..channels {
            gamma[c * channels + c] = 0.1;
        }
        GdnParams { channels, beta: vec![1.0; channels], gamma }
    }

    pub fn identity(channels: usize) -> Self {
        GdnParams { channels, beta: vec![1.0; channels], gamma: vec![0.0; channels * channels] }
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> GdnVar<'t> {
        let bind = |v: &Vec<f64>| if trainable { tape.leaf(Value::Flat(v.clone())) } else { tape.constant(Value::Flat(v.clone())) };
        GdnVar { channels: self.channels, beta: bind(&self.beta), gamma: bind(&self.gamma) }
    }
}

/// Clamps `beta >= BETA_MIN` and `gamma >= 0` in place.
pub fn project_gdn(beta: &mut [f64], gamma: &mut [f64]) {
    beta.iter_mut().for_each(|b| *b = b.max(BETA_MIN));
    gamma.iter_mut().for_each(|g| *g = g.max(0.0));
}

#[derive(Debug, Clone, Copy)]
pub struct GdnVar<'t> {
    pub channels: usize,
    pub beta: Var<'t>,
    pub gamma: Var<'t>,
}

impl<'t> GdnVar<'t> {
    pub fn from_params(tape: &'t Tape, channels: usize, beta: &Parameter, gamma: &Parameter) -> Result<Self> {
        if beta.len() != channels || gamma.len() != channels * channels {
            return Err(Error::ShapeMismatch(format!("GDN parameters do not fit {channels} channels")));
        }
        Ok(GdnVar { channels, beta: tape.param(beta), gamma: tape.param(gamma) })
    }
}

pub fn gdn<'t>(x: Var<'t>, p: &GdnVar<'t>, inverse: bool) -> Result<Var<'t>> {
    let shape = x.map_shape()?;
    let c = shape.channels;
    if c != p.channels {
        return Err(Error::ShapeMismatch(format!("GDN over {} channels applied to {c}", p.channels)));
    }
    let npix = shape.npix();
    let (xv, bv, gv) = (x.value(), p.beta.value(), p.gamma.value());
    let (xd, beta, gamma) = (xv.data(), bv.data(), gv.data());
    // norm[c][i] = beta_c + sum_j gamma_cj x_j^2
    let mut norm = vec![0.0; c * npix];
    for ch in 0..c {
        let row = &mut norm[ch * npix..(ch + 1) * npix];
        row.fill(beta[ch]);
        for j in 0..c {
            let g = gamma[ch * c + j];
            if g == 0.0 {
                continue;
            }
            for (n, &xj) in row.iter_mut().zip(&xd[j * npix..(j + 1) * npix]) {
                *n += g * xj * xj;
            }
        }
    }
    let y: Vec<f64> = xd
        .iter()
        .zip(&norm)
        .map(|(&x, &n)| if inverse { x * n.sqrt() } else { x / n.sqrt() })
        .collect();
    let out = Value::Map(SphereMap::from_parts_unchecked(shape, y));
    Ok(x.tape().record(out, &[x, p.beta, p.gamma], move |g, needs| {
        let (xd, gamma) = (xv.data(), gv.data());
        // a = g * dy/dnorm
        let a: Vec<f64> = g
            .iter()
            .zip(xd)
            .zip(&norm)
            .map(|((&g, &x), &n)| if inverse { 0.5 * g * x / n.sqrt() } else { -0.5 * g * x / (n * n.sqrt()) })
            .collect();
        let gx = needs[0].then(|| {
            let mut gx: Vec<f64> = g
                .iter()
                .zip(&norm)
                .map(|(&g, &n)| if inverse { g * n.sqrt() } else { g / n.sqrt() })
                .collect();
            for j in 0..c {
                for ch in 0..c {
                    let w = 2.0 * gamma[ch * c + j];
                    if w == 0.0 {
                        continue;
                    }
                    let ac = &a[ch * npix..(ch + 1) * npix];
                    let xj = &xd[j * npix..(j + 1) * npix];
                    for ((o, &a), &x) in gx[j * npix..(j + 1) * npix].iter_mut().zip(ac).zip(xj) {
                        *o += w * a * x;
                    }
                }
            }
            gx
        });
        let gbeta = needs[1].then(|| a.chunks(npix).map(|r| r.iter().sum()).collect());
        let ggamma = needs[2].then(|| {
            let mut out = vec![0.0; c * c];
            for ch in 0..c {
                let ac = &a[ch * npix..(ch + 1) * npix];
                for j in 0..c {
                    let xj = &xd[j * npix..(j + 1) * npix];
                    out[ch * c + j] = ac.iter().zip(xj).map(|(&a, &x)| a * x * x).sum();
                }
            }
            out
        });
        vec![gx, gbeta, ggamma]
    }))
}

pub fn gdn_map(x: &SphereMap, p: &GdnParams, inverse: bool) -> Result<SphereMap> {
    let tape = Tape::new();
    gdn(tape.constant_map(x.clone()), &p.bind(&tape, false), inverse)?.to_map()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::healpix::Order;
    use crate::tensor::MapShape;

    fn sample() -> SphereMap {
        SphereMap::from_fn(MapShape::full(Order::new(1).unwrap(), 3), |c, p| ((c as f64 + 1.0) * p.index() as f64).sin())
    }

    #[test]
    fn zero_gamma_unit_beta_is_identity() {
        let x = sample();
        assert_eq!(gdn_map(&x, &GdnParams::identity(3), false).unwrap(), x);
        assert_eq!(gdn_map(&x, &GdnParams::identity(3), true).unwrap(), x);
    }

    #[test]
    fn inverse_undoes_forward_without_cross_terms() {
        let x = sample();
        let p = GdnParams { channels: 3, beta: vec![0.5, 2.0, 7.0], gamma: vec![0.0; 9] };
        let back = gdn_map(&gdn_map(&x, &p, false).unwrap(), &p, true).unwrap();
        let err = back.data().iter().zip(x.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-14, "{err}");
    }

    #[test]
    fn projection_clamps() {
        let mut beta = vec![-1.0, 0.5];
        let mut gamma = vec![-0.2, 0.3, 0.0, -5.0];
        project_gdn(&mut beta, &mut gamma);
        assert_eq!(beta, vec![BETA_MIN, 0.5]);
        assert_eq!(gamma, vec![0.0, 0.3, 0.0, 0.0]);
    }
}
