use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::{conv_nhop, gdn, project_gdn, spconv, AggregationMode, GdnParams, GdnVar, Kernel, KernelVar};
use crate::tensor::{MapShape, Parameter, SphereMap, Tape, Value, Var};

use super::arch::{ArchConfig, Nonlinearity};
use super::entropy::{factorized_bits_var, gaussian_bits_var, lower_bound, quantize, FactorizedPrior, FactorizedVar, SIGMA_MIN};

#[derive(Debug, Clone)]
struct ConvSlot {
    theta: usize,
    bias: Option<usize>,
    l_in: usize,
    l_out: usize,
}

#[derive(Debug, Clone)]
enum Act {
    None,
    Relu,
    Gdn { beta: usize, gamma: usize, channels: usize, inverse: bool },
}

/// One n-hop convolution (or sub-pixel convolution when `up`) followed by
/// an activation.
#[derive(Debug, Clone)]
struct Block {
    convs: Vec<ConvSlot>,
    levels: u8,
    up: bool,
    act: Act,
}

struct BlockSpec<'a> {
    name: &'a str,
    l_in: usize,
    out: usize,
    hop: usize,
    levels: u8,
    up: bool,
    act: Nonlinearity,
    act_kind: ActKind,
}

#[derive(Clone, Copy, PartialEq)]
enum ActKind {
    None,
    Relu,
    Forward,
    Inverse,
}

struct Builder<'r> {
    params: Vec<Parameter>,
    rng: &'r mut ChaCha8Rng,
    mode: AggregationMode,
    bias: bool,
}

impl Builder<'_> {
    fn push(&mut self, name: String, values: Vec<f64>) -> usize {
        self.params.push(Parameter::new(name, values));
        self.params.len() - 1
    }

    fn block(&mut self, s: BlockSpec<'_>) -> Block {
        let target = if s.up { s.out << (2 * s.levels) } else { s.out };
        let per = if self.mode == AggregationMode::Concatenation { target / s.hop } else { target };
        let mut convs = Vec::with_capacity(s.hop);
        for k in 0..s.hop {
            let l_in = if k == 0 { s.l_in } else { per };
            let kern = Kernel::init_uniform(l_in, per, self.bias, self.rng);
            let theta = self.push(format!("{}.hop{k}.theta", s.name), kern.theta);
            let bias = kern.bias.map(|b| self.push(format!("{}.hop{k}.bias", s.name), b));
            convs.push(ConvSlot { theta, bias, l_in, l_out: per });
        }
        let act = match (s.act_kind, s.act) {
            (ActKind::None, _) => Act::None,
            (ActKind::Relu, _) | (_, Nonlinearity::Relu) => Act::Relu,
            (kind, Nonlinearity::Gdn) => {
                let g = GdnParams::init(s.out);
                let beta = self.push(format!("{}.gdn.beta", s.name), g.beta);
                let gamma = self.push(format!("{}.gdn.gamma", s.name), g.gamma);
                Act::Gdn { beta, gamma, channels: s.out, inverse: kind == ActKind::Inverse }
            }
        };
        Block { convs, levels: s.levels, up: s.up, act }
    }
}

/// Scale-hyperprior autoencoder on the nested grid.
#[derive(Debug, Clone)]
pub struct CodecModel {
    config: ArchConfig,
    params: Vec<Parameter>,
    analysis: Vec<Block>,
    synthesis: Vec<Block>,
    hyper_analysis: Vec<Block>,
    hyper_synthesis: Vec<Block>,
    prior: FactorizedPrior,
}

/// Parameters bound to a tape.
pub struct BoundModel<'t> {
    vars: Vec<Var<'t>>,
    prior: FactorizedVar<'t>,
}

impl BoundModel<'_> {
    pub fn vars(&self) -> impl Iterator<Item = Var<'_>> + '_ {
        self.vars.iter().chain(&self.prior.vars).copied()
    }
}

/// How latents are made discrete.
pub enum Quantizer<'r> {
    /// Additive uniform noise in `[-1/2, 1/2)`.
    Noise(&'r mut ChaCha8Rng),
    /// Ties-to-even rounding.
    Round,
}

/// Taped intermediate values of one forward pass.
pub struct TapedForward<'t> {
    pub y: Var<'t>,
    pub y_q: Var<'t>,
    pub nu: Var<'t>,
    pub nu_q: Var<'t>,
    pub sigma: Var<'t>,
    pub x_hat: Var<'t>,
    /// Total estimated bits, scalar.
    pub bits: Var<'t>,
    /// Mean squared error, scalar.
    pub mse: Var<'t>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub y: SphereMap,
    pub y_q: SphereMap,
    pub nu: SphereMap,
    pub nu_q: SphereMap,
    pub sigma: SphereMap,
    pub x_hat: SphereMap,
    pub rate_bits: f64,
    pub mse: f64,
}

fn quantize_var<'t>(x: Var<'t>, q: &mut Quantizer<'_>) -> Result<Var<'t>> {
    let tape = x.tape();
    let v = x.value();
    let shape = v.map_shape().ok_or_else(|| Error::InvalidArgument("latents must be maps".into()))?;
    match q {
        Quantizer::Noise(rng) => {
            let noise: Vec<f64> = (0..v.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
            x.add(tape.constant_map(SphereMap::with_shape(shape, noise)?))
        }
        Quantizer::Round => Ok(tape.constant_map(SphereMap::with_shape(shape, v.data().iter().map(|&a| quantize(a)).collect())?)),
    }
}

impl CodecModel {
    pub fn new(config: ArchConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let (sl, hl) = (config.stage_levels()?, config.hyper_levels()?);
        let (c, n, m, s) = (config.image_channels, config.n, config.m, config.num_stages);
        let nl = config.nonlinearity;
        let mut b = Builder { params: Vec::new(), rng, mode: config.aggregation, bias: config.bias };
        let spec = |name, l_in, out, hop, levels, up, act_kind| BlockSpec { name, l_in, out, hop, levels, up, act: nl, act_kind };
        let names: Vec<(String, String)> = (0..s).map(|i| (format!("e.{i}"), format!("d.{i}"))).collect();
        let mut analysis = Vec::new();
        for i in 0..s {
            let last = i + 1 == s;
            analysis.push(b.block(spec(
                &names[i].0,
                if i == 0 { c } else { n },
                if last { m } else { n },
                config.hop,
                sl,
                false,
                if last { ActKind::None } else { ActKind::Forward },
            )));
        }
        let hyper_analysis = vec![
            b.block(spec("es.0", m, n, 1, 0, false, ActKind::Relu)),
            b.block(spec("es.1", n, n, config.hop, hl, false, ActKind::Relu)),
            b.block(spec("es.2", n, n, config.hop, hl, false, ActKind::None)),
        ];
        let hyper_synthesis = vec![
            b.block(spec("ds.0", n, n, config.hop, hl, true, ActKind::Relu)),
            b.block(spec("ds.1", n, n, config.hop, hl, true, ActKind::Relu)),
            b.block(spec("ds.2", n, m, 1, 0, false, ActKind::Relu)),
        ];
        let mut synthesis = Vec::new();
        for i in 0..s {
            let last = i + 1 == s;
            synthesis.push(b.block(spec(
                &names[i].1,
                if i == 0 { m } else { n },
                if last { c } else { n },
                config.hop,
                sl,
                true,
                if last { ActKind::None } else { ActKind::Inverse },
            )));
        }
        let prior = FactorizedPrior::init(n, "prior", b.rng);
        Ok(CodecModel { config, params: b.params, analysis, synthesis, hyper_analysis, hyper_synthesis, prior })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    /// Every learnable array, transforms first, then the prior.
    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter().chain(self.prior.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut().chain(self.prior.params_mut())
    }

    pub fn num_values(&self) -> usize {
        self.params().map(|p| p.len()).sum()
    }

    pub fn prior(&self) -> &FactorizedPrior {
        &self.prior
    }

    /// Re-imposes the GDN constraints after an update.
    pub fn project(&mut self) {
        let blocks = self.analysis.iter().chain(&self.synthesis).chain(&self.hyper_analysis).chain(&self.hyper_synthesis);
        for blk in blocks {
            if let Act::Gdn { beta, gamma, .. } = blk.act {
                debug_assert!(beta < gamma);
                let (lo, hi) = self.params.split_at_mut(gamma);
                project_gdn(lo[beta].values_mut(), hi[0].values_mut());
            }
        }
    }

    /// Kernels of the first analysis convolution.
    pub fn first_kernel(&self) -> Kernel {
        let slot = &self.analysis[0].convs[0];
        Kernel {
            l_in: slot.l_in,
            l_out: slot.l_out,
            theta: self.params[slot.theta].values().to_vec(),
            bias: slot.bias.map(|b| self.params[b].values().to_vec()),
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundModel<'t> {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { tape.param(p) } else { tape.constant(Value::Flat(p.values().to_vec())) })
            .collect();
        BoundModel { vars, prior: FactorizedVar::bind(tape, &self.prior, trainable) }
    }

    fn run<'t>(&self, blocks: &[Block], b: &BoundModel<'t>, mut x: Var<'t>) -> Result<Var<'t>> {
        for blk in blocks {
            let kernels: Vec<KernelVar<'t>> = blk
                .convs
                .iter()
                .map(|c| KernelVar { l_in: c.l_in, l_out: c.l_out, theta: b.vars[c.theta], bias: c.bias.map(|i| b.vars[i]) })
                .collect();
            x = if blk.up {
                spconv(x, &kernels, self.config.aggregation, blk.levels)?
            } else {
                conv_nhop(x, &kernels, self.config.aggregation, 1 << blk.levels)?
            };
            x = match blk.act {
                Act::None => x,
                Act::Relu => x.relu(),
                Act::Gdn { beta, gamma, channels, inverse } => {
                    gdn(x, &GdnVar { channels, beta: b.vars[beta], gamma: b.vars[gamma] }, inverse)?
                }
            };
        }
        Ok(x)
    }

    fn check_input(&self, shape: MapShape) -> Result<()> {
        if shape.order.value() != self.config.input_order || shape.channels != self.config.image_channels {
            return Err(Error::ModelMismatch(format!(
                "model expects order {} with {} channels, got order {} with {}",
                self.config.input_order,
                self.config.image_channels,
                shape.order.value(),
                shape.channels
            )));
        }
        Ok(())
    }

    pub fn forward_taped<'t>(&self, b: &BoundModel<'t>, x: Var<'t>, q: &mut Quantizer<'_>) -> Result<TapedForward<'t>> {
        let shape = x.map_shape()?;
        self.check_input(shape)?;
        if shape.npix() >> (2 * self.config.total_levels()? as usize) == 0 {
            return Err(Error::InvalidArgument("input is too small for the hyper-latent stride".into()));
        }
        let y = self.run(&self.analysis, b, x)?;
        let nu = self.run(&self.hyper_analysis, b, y.abs())?;
        let nu_q = quantize_var(nu, q)?;
        let sigma = lower_bound(self.run(&self.hyper_synthesis, b, nu_q)?, SIGMA_MIN);
        let y_q = quantize_var(y, q)?;
        let bits_y = gaussian_bits_var(y_q, sigma)?.sum();
        let bits_nu = factorized_bits_var(nu_q, &b.prior)?.sum();
        let bits = bits_y.add(bits_nu)?;
        let x_hat = self.run(&self.synthesis, b, y_q)?;
        let mse = x_hat.sub(x)?.square().mean();
        Ok(TapedForward { y, y_q, nu, nu_q, sigma, x_hat, bits, mse })
    }

    /// One forward pass with constant parameters.
    pub fn encode_forward(&self, x: &SphereMap, mut q: Quantizer<'_>) -> Result<ForwardOutput> {
        let tape = Tape::new();
        let b = self.bind(&tape, false);
        let f = self.forward_taped(&b, tape.constant_map(x.clone()), &mut q)?;
        Ok(ForwardOutput {
            y: f.y.to_map()?,
            y_q: f.y_q.to_map()?,
            nu: f.nu.to_map()?,
            nu_q: f.nu_q.to_map()?,
            sigma: f.sigma.to_map()?,
            x_hat: f.x_hat.to_map()?,
            rate_bits: f.bits.item(),
            mse: f.mse.item(),
        })
    }

    /// Reconstruction from quantized latents.
    pub fn synthesize(&self, y_q: &SphereMap) -> Result<SphereMap> {
        let shape = y_q.shape();
        if shape.channels != self.config.m || shape.order != self.config.latent_order()? {
            return Err(Error::ModelMismatch(format!("latents {shape:?} do not fit the model")));
        }
        let tape = Tape::new();
        let b = self.bind(&tape, false);
        self.run(&self.synthesis, &b, tape.constant_map(y_q.clone()))?.to_map()
    }

    /// Estimated bits of quantized latents and hyper-latents.
    pub fn rate_bits(&self, y_q: &SphereMap, nu_q: &SphereMap) -> Result<f64> {
        let tape = Tape::new();
        let b = self.bind(&tape, false);
        let sigma = lower_bound(self.run(&self.hyper_synthesis, &b, tape.constant_map(nu_q.clone()))?, SIGMA_MIN);
        let bits_y = gaussian_bits_var(tape.constant_map(y_q.clone()), sigma)?.sum();
        let bits_nu = factorized_bits_var(tape.constant_map(nu_q.clone()), &b.prior)?.sum();
        Ok(bits_y.item() + bits_nu.item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::healpix::Order;
    use rand::SeedableRng;

    fn small() -> ArchConfig {
        ArchConfig { input_order: 4, num_stages: 1, n: 4, m: 5, ..ArchConfig::default() }
    }

    #[test]
    fn shapes_follow_the_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CodecModel::new(small(), &mut rng).unwrap();
        let x = SphereMap::constant(MapShape::full(Order::new(4).unwrap(), 3), 0.5);
        let out = model.encode_forward(&x, Quantizer::Round).unwrap();
        assert_eq!(out.y.shape(), MapShape::full(Order::new(3).unwrap(), 5));
        assert_eq!(out.nu.shape(), MapShape::full(Order::new(1).unwrap(), 4));
        assert_eq!(out.sigma.shape(), out.y.shape());
        assert_eq!(out.x_hat.shape(), x.shape());
        assert!(out.rate_bits >= 0.0);
        assert!(out.y_q.data().iter().chain(out.nu_q.data()).all(|v| v.fract() == 0.0));
        assert!(out.sigma.data().iter().all(|&s| s >= SIGMA_MIN));
        assert_eq!(model.synthesize(&out.y_q).unwrap(), out.x_hat);
        assert_eq!(model.rate_bits(&out.y_q, &out.nu_q).unwrap(), out.rate_bits);
    }

    #[test]
    fn wrong_order_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CodecModel::new(small(), &mut rng).unwrap();
        let x = SphereMap::constant(MapShape::full(Order::new(5).unwrap(), 3), 0.5);
        assert!(matches!(model.encode_forward(&x, Quantizer::Round), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn parameter_names_are_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CodecModel::new(ArchConfig::default(), &mut rng).unwrap();
        let mut names: Vec<&str> = model.params().map(|p| p.name()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }
}
