//! Entropy models: Gaussian conditional for the latents and a learned
//! per-channel factorized prior for the hyper-latents.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Parameter, Tape, Var};

/// Lower clamp on predicted scales.
pub const SIGMA_MIN: f64 = 0.11;
/// Lower clamp on bin probabilities.
pub const LIKELIHOOD_MIN: f64 = 1e-9;

fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `-log2 P(y)` for a zero-mean Gaussian of scale `sigma` integrated over
/// the unit bin around `y`.
pub fn gaussian_bits(y: f64, sigma: f64) -> f64 {
    let a = y.abs();
    let p = phi_cdf((0.5 - a) / sigma) - phi_cdf((-0.5 - a) / sigma);
    -p.max(LIKELIHOOD_MIN).log2()
}

/// Elementwise `max(x, bound)` whose gradient also flows below the bound
/// when it pushes the input upward.
pub fn lower_bound(x: Var<'_>, bound: f64) -> Var<'_> {
    let v = x.value();
    let xs = v.data().to_vec();
    let out = xs.iter().map(|&a| a.max(bound)).collect();
    x.tape().record(v.like(out), &[x], move |g, _| {
        vec![Some(xs.iter().zip(g).map(|(&a, &gi)| if a >= bound || gi < 0.0 { gi } else { 0.0 }).collect())]
    })
}

/// Per-element Gaussian bits of `y` given scales `sigma` (same shape).
pub fn gaussian_bits_var<'t>(y: Var<'t>, sigma: Var<'t>) -> Result<Var<'t>> {
    let (yv, sv) = (y.value(), sigma.value());
    if yv.map_shape() != sv.map_shape() || yv.len() != sv.len() {
        return Err(Error::ShapeMismatch("latents and scales differ in shape".into()));
    }
    let n = yv.len();
    let mut bits = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    for (&yi, &si) in yv.data().iter().zip(sv.data()) {
        let a = yi.abs();
        let (hi, lo) = ((0.5 - a) / si, (-0.5 - a) / si);
        let p = (phi_cdf(hi) - phi_cdf(lo)).max(LIKELIHOOD_MIN);
        bits.push(-p.log2());
        let db_dp = -1.0 / (p * LN_2);
        let dp_da = (phi_pdf(lo) - phi_pdf(hi)) / si;
        let dp_ds = (lo * phi_pdf(lo) - hi * phi_pdf(hi)) / si;
        dy.push(db_dp * dp_da * if yi > 0.0 { 1.0 } else if yi < 0.0 { -1.0 } else { 0.0 });
        ds.push(db_dp * dp_ds);
    }
    Ok(y.tape().record(yv.like(bits), &[y, sigma], move |g, needs| {
        vec![
            needs[0].then(|| g.iter().zip(&dy).map(|(a, b)| a * b).collect()),
            needs[1].then(|| g.iter().zip(&ds).map(|(a, b)| a * b).collect()),
        ]
    }))
}

/// Widths of the cumulative network: scalar in, three hidden layers of
/// width 3, scalar out.
const DIMS: [usize; 5] = [1, 3, 3, 3, 1];
const LAYERS: usize = DIMS.len() - 1;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameters of the factorized prior, one small monotone network per
/// channel. Layer `k` has `matrices[k]` laid out `[c][out][in]`,
/// `biases[k]` `[c][out]`, and for hidden layers `factors[k]` `[c][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedPrior {
    pub channels: usize,
    pub matrices: Vec<Parameter>,
    pub biases: Vec<Parameter>,
    pub factors: Vec<Parameter>,
}

impl FactorizedPrior {
    pub fn init(channels: usize, prefix: &str, rng: &mut impl Rng) -> Self {
        let init_scale: f64 = 10.0;
        let scale = init_scale.powf(1.0 / (LAYERS as f64));
        let mut matrices = Vec::new();
        let mut biases = Vec::new();
        let mut factors = Vec::new();
        for k in 0..LAYERS {
            let (din, dout) = (DIMS[k], DIMS[k + 1]);
            let m0 = (1.0 / scale / dout as f64).exp_m1().ln();
            matrices.push(Parameter::new(format!("{prefix}.matrix{k}"), vec![m0; channels * dout * din]));
            biases.push(Parameter::new(
                format!("{prefix}.bias{k}"),
                (0..channels * dout).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            ));
            if k + 1 < LAYERS {
                factors.push(Parameter::new(format!("{prefix}.factor{k}"), vec![0.0; channels * dout]));
            }
        }
        FactorizedPrior { channels, matrices, biases, factors }
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.matrices.iter().chain(&self.biases).chain(&self.factors)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.matrices.iter_mut().chain(self.biases.iter_mut()).chain(self.factors.iter_mut())
    }

    /// Bits of an integer-valued (or noisy) hyper-latent element.
    pub fn bits(&self, channel: usize, x: f64) -> f64 {
        let view = PriorView::new(
            self.matrices.iter().map(|p| p.values()).collect(),
            self.biases.iter().map(|p| p.values()).collect(),
            self.factors.iter().map(|p| p.values()).collect(),
        );
        view.element(channel, x, None).0
    }
}

/// Tape-bound prior parameters, in the order matrices, biases, factors.
#[derive(Debug, Clone)]
pub struct FactorizedVar<'t> {
    pub channels: usize,
    pub vars: Vec<Var<'t>>,
}

impl<'t> FactorizedVar<'t> {
    pub fn bind(tape: &'t Tape, prior: &FactorizedPrior, trainable: bool) -> Self {
        let vars = prior
            .params()
            .map(|p| if trainable { tape.param(p) } else { tape.constant(crate::tensor::Value::Flat(p.values().to_vec())) })
            .collect();
        FactorizedVar { channels: prior.channels, vars }
    }
}

struct PriorView<'a> {
    softplus_m: Vec<Vec<f64>>,
    sigmoid_m: Vec<Vec<f64>>,
    biases: Vec<&'a [f64]>,
    tanh_f: Vec<Vec<f64>>,
}

/// Parameter gradients of one element, same layout as the parameters.
struct PriorGrads {
    matrices: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    factors: Vec<Vec<f64>>,
}

impl<'a> PriorView<'a> {
    fn new(matrices: Vec<&'a [f64]>, biases: Vec<&'a [f64]>, factors: Vec<&'a [f64]>) -> Self {
        PriorView {
            softplus_m: matrices.iter().map(|m| m.iter().map(|&v| softplus(v)).collect()).collect(),
            sigmoid_m: matrices.iter().map(|m| m.iter().map(|&v| sigmoid(v)).collect()).collect(),
            biases,
            tanh_f: factors.iter().map(|f| f.iter().map(|&v| v.tanh()).collect()).collect(),
        }
    }

    /// Logit of the cumulative at `t`, with the pre- and post-gate
    /// activations of every layer.
    fn logits(&self, c: usize, t: f64) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut h = vec![t];
        let mut inputs = Vec::with_capacity(LAYERS);
        let mut pre = Vec::with_capacity(LAYERS);
        for k in 0..LAYERS {
            let (din, dout) = (DIMS[k], DIMS[k + 1]);
            let m = &self.softplus_m[k][c * dout * din..(c + 1) * dout * din];
            let b = &self.biases[k][c * dout..(c + 1) * dout];
            let z: Vec<f64> = (0..dout).map(|o| b[o] + (0..din).map(|i| m[o * din + i] * h[i]).sum::<f64>()).collect();
            inputs.push(h);
            h = if k + 1 < LAYERS {
                let f = &self.tanh_f[k][c * dout..(c + 1) * dout];
                z.iter().zip(f).map(|(&zi, &fi)| zi + fi * zi.tanh()).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        (h[0], inputs, pre)
    }

    /// Backpropagates `g` (gradient on the logit) through one pass,
    /// returning the gradient on `t`.
    fn backprop(&self, c: usize, g: f64, inputs: &[Vec<f64>], pre: &[Vec<f64>], grads: &mut PriorGrads) -> f64 {
        let mut gh = vec![g];
        for k in (0..LAYERS).rev() {
            let (din, dout) = (DIMS[k], DIMS[k + 1]);
            let gz: Vec<f64> = if k + 1 < LAYERS {
                let f = &self.tanh_f[k][c * dout..(c + 1) * dout];
                let gf = &mut grads.factors[k][c * dout..(c + 1) * dout];
                (0..dout)
                    .map(|o| {
                        let tz = pre[k][o].tanh();
                        gf[o] += gh[o] * tz * (1.0 - f[o] * f[o]);
                        gh[o] * (1.0 + f[o] * (1.0 - tz * tz))
                    })
                    .collect()
            } else {
                gh.clone()
            };
            let base = c * dout * din;
            let mut gin = vec![0.0; din];
            for o in 0..dout {
                grads.biases[k][c * dout + o] += gz[o];
                for i in 0..din {
                    let at = base + o * din + i;
                    grads.matrices[k][at] += gz[o] * inputs[k][i] * self.sigmoid_m[k][at];
                    gin[i] += self.softplus_m[k][at] * gz[o];
                }
            }
            gh = gin;
        }
        gh[0]
    }

    /// Bits of `x` in channel `c`; when `grads` is given, accumulates the
    /// parameter gradient scaled by `g` and returns `d bits / dx` too.
    fn element(&self, c: usize, x: f64, grads: Option<(f64, &mut PriorGrads)>) -> (f64, f64) {
        let (lo, in_lo, pre_lo) = self.logits(c, x - 0.5);
        let (hi, in_hi, pre_hi) = self.logits(c, x + 0.5);
        let s = if lo + hi > 0.0 { -1.0 } else { 1.0 };
        let diff = sigmoid(s * hi) - sigmoid(s * lo);
        let p = diff.abs().max(LIKELIHOOD_MIN);
        let bits = -p.log2();
        let Some((g, grads)) = grads else { return (bits, 0.0) };
        let sgn = if diff >= 0.0 { 1.0 } else { -1.0 };
        let db_dp = -1.0 / (p * LN_2) * g;
        let dsig = |v: f64| {
            let sv = sigmoid(v);
            sv * (1.0 - sv)
        };
        let g_hi = db_dp * sgn * s * dsig(s * hi);
        let g_lo = -db_dp * sgn * s * dsig(s * lo);
        let dx = self.backprop(c, g_hi, &in_hi, &pre_hi, grads) + self.backprop(c, g_lo, &in_lo, &pre_lo, grads);
        (bits, dx)
    }
}

/// Per-element bits of the hyper-latents `x` (a map with one prior
/// channel per map channel).
pub fn factorized_bits_var<'t>(x: Var<'t>, prior: &FactorizedVar<'t>) -> Result<Var<'t>> {
    let xv = x.value();
    let shape = xv.map_shape().ok_or_else(|| Error::InvalidArgument("factorized prior needs a map".into()))?;
    if shape.channels != prior.channels {
        return Err(Error::ShapeMismatch(format!("{} channels vs prior of {}", shape.channels, prior.channels)));
    }
    let npix = shape.npix();
    let values: Vec<std::rc::Rc<crate::tensor::Value>> = prior.vars.iter().map(|v| v.value()).collect();
    let data: Vec<&[f64]> = values.iter().map(|v| v.data()).collect();
    let view = PriorView::new(data[..LAYERS].to_vec(), data[LAYERS..2 * LAYERS].to_vec(), data[2 * LAYERS..].to_vec());
    let bits: Vec<f64> = xv.data().iter().enumerate().map(|(i, &t)| view.element(i / npix, t, None).0).collect();
    let xs = xv.data().to_vec();
    let params: Vec<Vec<f64>> = data.iter().map(|d| d.to_vec()).collect();
    let mut parents = vec![x];
    parents.extend(prior.vars.iter().copied());
    Ok(x.tape().record(xv.like(bits), &parents, move |g, needs| {
        let refs: Vec<&[f64]> = params.iter().map(|p| p.as_slice()).collect();
        let view = PriorView::new(refs[..LAYERS].to_vec(), refs[LAYERS..2 * LAYERS].to_vec(), refs[2 * LAYERS..].to_vec());
        let mut grads = PriorGrads {
            matrices: params[..LAYERS].iter().map(|p| vec![0.0; p.len()]).collect(),
            biases: params[LAYERS..2 * LAYERS].iter().map(|p| vec![0.0; p.len()]).collect(),
            factors: params[2 * LAYERS..].iter().map(|p| vec![0.0; p.len()]).collect(),
        };
        let dx: Vec<f64> = xs.iter().enumerate().map(|(i, &t)| view.element(i / npix, t, Some((g[i], &mut grads))).1).collect();
        let mut out = vec![needs[0].then_some(dx)];
        out.extend(grads.matrices.into_iter().chain(grads.biases).chain(grads.factors).enumerate().map(|(k, v)| needs[k + 1].then_some(v)));
        out
    }))
}

/// Ties-to-even rounding used for eval-mode quantization.
pub fn quantize(v: f64) -> f64 {
    v.round_ties_even()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_at_sigma_min_matches_closed_form() {
        let expect = -(phi_cdf(0.5 / SIGMA_MIN) - phi_cdf(-0.5 / SIGMA_MIN)).log2();
        assert!((gaussian_bits(0.0, SIGMA_MIN) - expect).abs() < 1e-15);
        // erf(0.5 / (0.11 sqrt 2)) is within 1e-5 of one
        assert!(expect > 0.0 && expect < 1e-4, "{expect}");
    }

    #[test]
    fn rate_grows_with_scale_and_magnitude() {
        assert!(gaussian_bits(0.0, 1.0) < gaussian_bits(0.0, 10.0));
        assert!(gaussian_bits(1.0, 1.0) < gaussian_bits(3.0, 1.0));
        assert_eq!(gaussian_bits(40.0, SIGMA_MIN), -LIKELIHOOD_MIN.log2());
    }

    #[test]
    fn rounding_is_ties_to_even() {
        assert_eq!(quantize(2.4), 2.0);
        assert_eq!(quantize(-2.5), -2.0);
        assert_eq!(quantize(2.5), 2.0);
        assert_eq!(quantize(3.5), 4.0);
        assert_eq!(quantize(-0.6), -1.0);
    }

    #[test]
    fn factorized_prior_is_a_pmf() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let prior = FactorizedPrior::init(2, "p", &mut rng);
        for c in 0..2 {
            let total: f64 = (-200..=200).map(|k| 2f64.powf(-prior.bits(c, k as f64))).sum();
            assert!((total - 1.0).abs() < 1e-6, "{total}");
        }
    }
}
