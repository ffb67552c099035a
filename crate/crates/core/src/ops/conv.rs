//! Directional 1-hop convolution on the nested grid.
//!
//! For output channel `l` at pixel `i`:
//!
//! ```text
//! y[l][i] = <theta[l][0], x_i> + sum_k <theta[l][k], x_{N_i(k)}> * w_{N_i(k), i} (+ bias[l])
//! ```
//!
//! with `w = 0` when neighbor `k` is missing or lies outside the map's
//! patch. The reduction is computed as an im2col matrix product.

use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::healpix::{neighbor_table, Direction, NO_NEIGHBOR};
use crate::tensor::{MapShape, Parameter, SphereMap, Tape, Value, Var};

/// Taps per output pixel: the center plus 8 compass neighbors.
pub const TAPS: usize = 9;

/// Output pixels processed per im2col block.
const BLOCK: usize = 2048;

/// Weights of one convolution layer. `theta` is laid out
/// `[l_out][9][l_in]`: slot 0 is the center, slots 1..=8 follow
/// SW, W, NW, N, NE, E, SE, S.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub l_in: usize,
    pub l_out: usize,
    pub theta: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Kernel {
    pub fn new(l_in: usize, l_out: usize, theta: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        if l_in == 0 || l_out == 0 {
            return Err(Error::InvalidArgument("kernel channel counts must be positive".into()));
        }
        if theta.len() != l_out * TAPS * l_in {
            return Err(Error::ShapeMismatch(format!(
                "kernel {l_in}->{l_out} needs {} weights, got {}",
                l_out * TAPS * l_in,
                theta.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != l_out {
                return Err(Error::ShapeMismatch(format!("bias needs {l_out} entries, got {}", b.len())));
            }
        }
        if theta.iter().chain(bias.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Domain { op: "Kernel::new", detail: "non-finite weight".into() });
        }
        Ok(Kernel { l_in, l_out, theta, bias })
    }

    pub fn zeros(l_in: usize, l_out: usize, bias: bool) -> Self {
        Kernel { l_in, l_out, theta: vec![0.0; l_out * TAPS * l_in], bias: bias.then(|| vec![0.0; l_out]) }
    }

    /// Center tap is the identity, every neighbor tap is zero.
    pub fn identity(channels: usize) -> Self {
        let mut k = Kernel::zeros(channels, channels, false);
        for c in 0..channels {
            *k.weight_mut(c, 0, c) = 1.0;
        }
        k
    }

    /// Uniform in `+-sqrt(6 / (9 l_in + 9 l_out))`, zero bias.
    pub fn init_uniform(l_in: usize, l_out: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (TAPS * (l_in + l_out)) as f64).sqrt();
        let theta = (0..l_out * TAPS * l_in).map(|_| rng.gen_range(-bound..bound)).collect();
        Kernel { l_in, l_out, theta, bias: bias.then(|| vec![0.0; l_out]) }
    }

    #[inline]
    pub fn weight(&self, out: usize, tap: usize, inp: usize) -> f64 {
        self.theta[(out * TAPS + tap) * self.l_in + inp]
    }

    #[inline]
    pub fn weight_mut(&mut self, out: usize, tap: usize, inp: usize) -> &mut f64 {
        &mut self.theta[(out * TAPS + tap) * self.l_in + inp]
    }

    /// Binds the weights as constants (no gradient).
    pub fn constant<'t>(&self, tape: &'t Tape) -> KernelVar<'t> {
        KernelVar {
            l_in: self.l_in,
            l_out: self.l_out,
            theta: tape.constant(Value::Flat(self.theta.clone())),
            bias: self.bias.as_ref().map(|b| tape.constant(Value::Flat(b.clone()))),
        }
    }

    /// Binds the weights as differentiable leaves.
    pub fn leaf<'t>(&self, tape: &'t Tape) -> KernelVar<'t> {
        KernelVar {
            l_in: self.l_in,
            l_out: self.l_out,
            theta: tape.leaf(Value::Flat(self.theta.clone())),
            bias: self.bias.as_ref().map(|b| tape.leaf(Value::Flat(b.clone()))),
        }
    }

    /// CSV of the weights with the mean tangent-plane offset of each tap:
    /// `out,in,tap,dx,dy,weight`. `offsets[k]` is the offset of slot `k`
    /// (slot 0 is the center at the origin).
    pub fn to_csv(&self, offsets: &[(f64, f64); TAPS]) -> String {
        let mut s = String::from("out,in,tap,dx,dy,weight\n");
        for o in 0..self.l_out {
            for i in 0..self.l_in {
                for (t, (dx, dy)) in offsets.iter().enumerate() {
                    let name = if t == 0 { "C" } else { Direction::ALL[t - 1].name() };
                    s.push_str(&format!("{o},{i},{name},{dx:.6e},{dy:.6e},{:.9e}\n", self.weight(o, t, i)));
                }
            }
        }
        s
    }
}

/// Kernel weights bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct KernelVar<'t> {
    pub l_in: usize,
    pub l_out: usize,
    pub theta: Var<'t>,
    pub bias: Option<Var<'t>>,
}

impl<'t> KernelVar<'t> {
    /// Binds parameters holding `theta` (and optionally `bias`).
    pub fn from_params(
        tape: &'t Tape,
        l_in: usize,
        l_out: usize,
        theta: &Parameter,
        bias: Option<&Parameter>,
    ) -> Result<Self> {
        if theta.len() != l_out * TAPS * l_in || bias.is_some_and(|b| b.len() != l_out) {
            return Err(Error::ShapeMismatch(format!("parameter {} does not fit a {l_in}->{l_out} kernel", theta.name())));
        }
        Ok(KernelVar { l_in, l_out, theta: tape.param(theta), bias: bias.map(|b| tape.param(b)) })
    }
}

/// Local input index per tap of every output pixel; [`NO_NEIGHBOR`] marks
/// taps whose weight is zero.
pub(crate) struct Taps {
    pub centers: usize,
    pub idx: Vec<u32>,
}

/// Taps of a convolution over `shape` whose centers are every
/// `4^levels`-th local pixel.
pub(crate) fn build_taps(shape: MapShape, levels: u8) -> Result<Taps> {
    if shape.order.value() == 0 {
        return Err(Error::OrderUnderflow("convolution needs order >= 1".into()));
    }
    let step = 1usize << (2 * levels as u32);
    let npix = shape.npix();
    if npix % step != 0 {
        return Err(Error::InvalidStride(1 << levels));
    }
    let centers = npix / step;
    let table = neighbor_table(shape.order);
    let offset = shape.offset();
    let mut idx = Vec::with_capacity(centers * TAPS);
    for j in 0..centers {
        let local = j * step;
        idx.push(local as u32);
        for &n in table.get(offset as usize + local) {
            let l = if n == NO_NEIGHBOR { None } else { shape.local_index(n as u64) };
            idx.push(l.map_or(NO_NEIGHBOR, |l| l as u32));
        }
    }
    Ok(Taps { centers, idx })
}

/// Gathers rows `[j0, j1)` of the im2col matrix (row-major, `9 * l_in` columns).
fn im2col(x: &[f64], npix: usize, l_in: usize, taps: &Taps, j0: usize, j1: usize, g: &mut [f64]) {
    let k = TAPS * l_in;
    for j in j0..j1 {
        let row = &mut g[(j - j0) * k..(j - j0 + 1) * k];
        for t in 0..TAPS {
            let src = taps.idx[j * TAPS + t];
            let cols = &mut row[t * l_in..(t + 1) * l_in];
            if src == NO_NEIGHBOR {
                cols.fill(0.0);
            } else {
                for (c, v) in cols.iter_mut().enumerate() {
                    *v = x[c * npix + src as usize];
                }
            }
        }
    }
}

/// `c = alpha * a * b + beta * c` on strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() > (m - 1) * rsa + k.saturating_sub(1) * csa || k == 0);
    debug_assert!(b.len() > k.saturating_sub(1) * rsb + (n - 1) * csb || k == 0);
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn conv_forward(x: &[f64], npix: usize, taps: &Taps, theta: &[f64], bias: Option<&[f64]>, l_in: usize, l_out: usize) -> Vec<f64> {
    let k = TAPS * l_in;
    let p_out = taps.centers;
    let mut y = vec![0.0; l_out * p_out];
    let mut g = vec![0.0; BLOCK.min(p_out) * k];
    let mut j0 = 0;
    while j0 < p_out {
        let j1 = (j0 + BLOCK).min(p_out);
        let b = j1 - j0;
        im2col(x, npix, l_in, taps, j0, j1, &mut g);
        // y[:, j0..j1] = theta (l_out x k) * g^T (k x b)
        gemm(l_out, k, b, theta, k, 1, &g, 1, k, 0.0, &mut y[j0..], p_out, 1);
        j0 = j1;
    }
    if let Some(bias) = bias {
        for (l, row) in y.chunks_mut(p_out).enumerate() {
            row.iter_mut().for_each(|v| *v += bias[l]);
        }
    }
    y
}

/// Returns `(dx, dtheta)`; either may be skipped.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    npix: usize,
    taps: &Taps,
    theta: &[f64],
    dy: &[f64],
    l_in: usize,
    l_out: usize,
    want_dx: bool,
    want_dtheta: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let k = TAPS * l_in;
    let p_out = taps.centers;
    let mut dx = want_dx.then(|| vec![0.0; l_in * npix]);
    let mut dtheta = want_dtheta.then(|| vec![0.0; l_out * k]);
    let mut g = vec![0.0; BLOCK.min(p_out) * k];
    let mut dg = vec![0.0; if want_dx { BLOCK.min(p_out) * k } else { 0 }];
    let mut j0 = 0;
    while j0 < p_out {
        let j1 = (j0 + BLOCK).min(p_out);
        let b = j1 - j0;
        if let Some(dt) = dtheta.as_mut() {
            im2col(x, npix, l_in, taps, j0, j1, &mut g);
            // dtheta += dy[:, j0..j1] (l_out x b) * g (b x k)
            gemm(l_out, b, k, &dy[j0..], p_out, 1, &g, k, 1, 1.0, dt, k, 1);
        }
        if let Some(dx) = dx.as_mut() {
            // dg (b x k) = dy[:, j0..j1]^T (b x l_out) * theta (l_out x k)
            gemm(b, l_out, k, &dy[j0..], 1, p_out, theta, k, 1, 0.0, &mut dg, k, 1);
            for j in j0..j1 {
                let row = &dg[(j - j0) * k..(j - j0 + 1) * k];
                for t in 0..TAPS {
                    let dst = taps.idx[j * TAPS + t];
                    if dst == NO_NEIGHBOR {
                        continue;
                    }
                    for c in 0..l_in {
                        dx[c * npix + dst as usize] += row[t * l_in + c];
                    }
                }
            }
        }
        j0 = j1;
    }
    (dx, dtheta)
}

/// Convolution whose output is evaluated at every `4^levels`-th pixel
/// (stride `2^levels`). `levels = 0` is the plain 1-hop convolution.
pub(crate) fn conv_strided<'t>(x: Var<'t>, k: &KernelVar<'t>, levels: u8) -> Result<Var<'t>> {
    let shape = x.map_shape()?;
    if shape.channels != k.l_in {
        return Err(Error::ShapeMismatch(format!(
            "convolution expects {} input channels, map has {}",
            k.l_in, shape.channels
        )));
    }
    let out_shape = shape.coarsen(levels)?.with_channels(k.l_out);
    let taps = Rc::new(build_taps(shape, levels)?);
    let (l_in, l_out, npix) = (k.l_in, k.l_out, shape.npix());
    let xv = x.value();
    let tv = k.theta.value();
    let bv = k.bias.map(|b| b.value());
    let y = conv_forward(xv.data(), npix, &taps, tv.data(), bv.as_ref().map(|b| b.data()), l_in, l_out);
    let out = Value::Map(SphereMap::from_parts_unchecked(out_shape, y));

    let mut parents = vec![x, k.theta];
    parents.extend(k.bias);
    let has_bias = k.bias.is_some();
    Ok(x.tape().record(out, &parents, move |dy, needs| {
        let (dx, dtheta) = conv_backward(xv.data(), npix, &taps, tv.data(), dy, l_in, l_out, needs[0], needs[1]);
        let mut grads = vec![dx, dtheta];
        if has_bias {
            let p_out = taps.centers;
            grads.push(needs[2].then(|| dy.chunks(p_out).map(|row| row.iter().sum()).collect()));
        }
        grads
    }))
}

/// Directional 1-hop convolution at stride 1.
pub fn conv1hop<'t>(x: Var<'t>, k: &KernelVar<'t>) -> Result<Var<'t>> {
    conv_strided(x, k, 0)
}

/// Eager [`conv1hop`] on a map.
pub fn conv1hop_map(x: &SphereMap, k: &Kernel) -> Result<SphereMap> {
    let tape = Tape::new();
    conv1hop(tape.constant_map(x.clone()), &k.constant(&tape))?.to_map()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::healpix::Order;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_map(order: u8, channels: usize, seed: u64) -> SphereMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = MapShape::full(Order::new(order).unwrap(), channels);
        SphereMap::from_fn(shape, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = random_map(2, 3, 1);
        assert_eq!(conv1hop_map(&x, &Kernel::identity(3)).unwrap(), x);
    }

    #[test]
    fn zero_kernel_with_bias_is_constant() {
        let x = random_map(2, 2, 2);
        let mut k = Kernel::zeros(2, 3, true);
        k.bias = Some(vec![0.5, -1.0, 2.0]);
        let y = conv1hop_map(&x, &k).unwrap();
        for (l, b) in [0.5, -1.0, 2.0].iter().enumerate() {
            assert!(y.channel(l).iter().all(|v| v == b));
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = random_map(1, 2, 3);
        assert!(matches!(conv1hop_map(&x, &Kernel::identity(3)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn order_zero_is_rejected() {
        let x = random_map(0, 1, 3);
        assert!(conv1hop_map(&x, &Kernel::identity(1)).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(Kernel::new(2, 2, vec![0.0; 35], None).is_err());
        assert!(Kernel::new(2, 2, vec![0.0; 36], Some(vec![0.0])).is_err());
        assert!(Kernel::new(1, 1, vec![f64::NAN; 9], None).is_err());
        assert!(Kernel::new(1, 1, vec![0.0; 9], Some(vec![1.0])).is_ok());
    }

    #[test]
    fn init_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = Kernel::init_uniform(4, 8, true, &mut rng);
        let bound = (6.0f64 / (9.0 * 12.0)).sqrt();
        assert!(k.theta.iter().all(|v| v.abs() <= bound));
        assert_eq!(k.bias, Some(vec![0.0; 8]));
    }
}
