use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::healpix::{pix2vec, Order};
use crate::ops::{make_patch_with, PatchSpec};
use crate::tensor::{MapShape, Parameter, SphereMap, Tape};

use super::arch::ArchConfig;
use super::model::{CodecModel, Quantizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub struct Adam {
    config: AdamConfig,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update from the accumulated gradients.
    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut Parameter>) {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let (c1, c2) = (1.0 - beta1.powi(self.t), 1.0 - beta2.powi(self.t));
        for (k, p) in params.enumerate() {
            if self.m.len() <= k {
                self.m.push(vec![0.0; p.len()]);
                self.v.push(vec![0.0; p.len()]);
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let (values, grad) = p.values_and_grad();
            for i in 0..values.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                values[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Where training images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// HPXM files at the model's input order.
    Files { paths: Vec<PathBuf> },
    /// Smooth random images.
    Synthetic { count: usize, seed: u64 },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic { count: 4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub lambda: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patch_side: usize,
    /// Draw this many patches once and train on them only.
    pub fixed_patches: Option<usize>,
    pub seed: u64,
    pub dataset: DatasetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            lambda: 0.01,
            steps: 1000,
            batch_size: 10,
            adam: AdamConfig::default(),
            patch_side: 32,
            fixed_patches: None,
            seed: 0,
            dataset: DatasetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 || self.fixed_patches == Some(0) {
            return Err(Error::InvalidArgument("batch size and patch count must be positive".into()));
        }
        if !self.patch_side.is_power_of_two() || self.patch_side.trailing_zeros() as u8 > self.arch.input_order {
            return Err(Error::InvalidArgument(format!("invalid patch side {}", self.patch_side)));
        }
        let need = self.arch.total_levels()? as u32;
        if self.patch_side.trailing_zeros() < need {
            return Err(Error::InvalidArgument(format!(
                "patch side {} is too small for {} levels of downsampling",
                self.patch_side, need
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub mse_db: f64,
    pub rate_bpp: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str = "step,loss,mse_db,rate_bpp";

    /// Full-precision CSV, so replays compare bit-for-bit.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.step, r.loss, r.mse_db, r.rate_bpp));
        }
        s
    }

    /// Mean loss of consecutive blocks of `window` steps.
    pub fn block_means(&self, window: usize) -> Vec<f64> {
        self.rows.chunks_exact(window).map(|c| c.iter().map(|r| r.loss).sum::<f64>() / window as f64).collect()
    }
}

/// Smooth random image: a few soft blobs over a gentle gradient, values in
/// `[0, 1]`.
pub fn synthetic_image(order: Order, channels: usize, rng: &mut impl Rng) -> SphereMap {
    let blobs: Vec<([f64; 3], f64, Vec<f64>)> = (0..6)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            let width = rng.gen_range(0.15..0.6);
            let amp = (0..channels).map(|_| rng.gen_range(-0.35..0.35)).collect();
            ([r * phi.cos(), r * phi.sin(), z], width, amp)
        })
        .collect();
    let tilt: Vec<f64> = (0..channels).map(|_| rng.gen_range(-0.15..0.15)).collect();
    SphereMap::from_fn(MapShape::full(order, channels), |c, p| {
        let v = pix2vec(p);
        let mut s = 0.5 + tilt[c] * v[2];
        for (center, width, amp) in &blobs {
            let dot = v[0] * center[0] + v[1] * center[1] + v[2] * center[2];
            s += amp[c] * ((dot - 1.0) / (width * width)).exp();
        }
        s.clamp(0.0, 1.0)
    })
}

pub fn load_dataset(config: &TrainConfig) -> Result<Vec<SphereMap>> {
    let order = Order::new(config.arch.input_order)?;
    let images = match &config.dataset {
        DatasetConfig::Files { paths } => {
            paths.iter().map(crate::resample::read_hpxm).collect::<Result<Vec<_>>>()?
        }
        DatasetConfig::Synthetic { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..*count).map(|_| synthetic_image(order, config.arch.image_channels, &mut rng)).collect()
        }
    };
    if images.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    for m in &images {
        if m.order() != order || m.channels() != config.arch.image_channels {
            return Err(Error::ModelMismatch(format!(
                "dataset image has order {} with {} channels",
                m.order().value(),
                m.channels()
            )));
        }
    }
    Ok(images)
}

fn draw_patch(images: &[SphereMap], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<SphereMap> {
    let img = &images[rng.gen_range(0..images.len())];
    let spec: PatchSpec = make_patch_with(img.order(), config.patch_side, rng)?;
    spec.extract(img)
}

fn draw_fixed(images: &[SphereMap], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Option<Vec<SphereMap>>> {
    match config.fixed_patches {
        Some(n) => Ok(Some((0..n).map(|_| draw_patch(images, config, rng)).collect::<Result<_>>()?)),
        None => Ok(None),
    }
}

/// The patch set that [`train`] cycles through when `fixed_patches` is set.
pub fn fixed_patch_set(config: &TrainConfig, images: &[SphereMap]) -> Result<Option<Vec<SphereMap>>> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    draw_fixed(images, config, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

/// Trains `model` in place. Deterministic for a fixed config and dataset.
pub fn train(model: &mut CodecModel, config: &TrainConfig, images: &[SphereMap]) -> Result<TrainingLog> {
    train_with(model, config, images, |_| {})
}

/// As [`train`], calling `on_step` after every logged step.
pub fn train_with(
    model: &mut CodecModel,
    config: &TrainConfig,
    images: &[SphereMap],
    mut on_step: impl FnMut(&LogRow),
) -> Result<TrainingLog> {
    config.validate()?;
    if model.config() != &config.arch {
        return Err(Error::ModelMismatch("model and training config disagree on the architecture".into()));
    }
    if images.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fixed = draw_fixed(images, config, &mut rng)?;
    let mut order: Vec<usize> = Vec::new();
    let mut adam = Adam::new(config.adam.clone());
    let mut log = TrainingLog::default();
    for step in 0..config.steps {
        let batch: Vec<SphereMap> = match &fixed {
            Some(set) => (0..config.batch_size)
                .map(|_| {
                    if order.is_empty() {
                        order = (0..set.len()).collect();
                        order.shuffle(&mut rng);
                    }
                    set[order.pop().expect("refilled")].clone()
                })
                .collect(),
            None => (0..config.batch_size).map(|_| draw_patch(images, config, &mut rng)).collect::<Result<_>>()?,
        };
        let tape = Tape::unchecked();
        let bound = model.bind(&tape, true);
        let mut loss = tape.scalar(0.0);
        let (mut mse_sum, mut bpp_sum) = (0.0, 0.0);
        let inv = 1.0 / batch.len() as f64;
        for x in batch {
            let npix = x.npix() as f64;
            let f = model.forward_taped(&bound, tape.constant_map(x), &mut Quantizer::Noise(&mut rng))?;
            mse_sum += f.mse.item();
            bpp_sum += f.bits.item() / npix;
            let sample = f.mse.add_scaled(f.bits, config.lambda / npix)?;
            loss = loss.add_scaled(sample, inv)?;
        }
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::Diverged { step });
        }
        let grads = tape.backward(loss)?;
        for (p, v) in model.params_mut().zip(bound.vars()) {
            p.zero_grad();
            grads.accumulate(v, p);
        }
        if model.params().any(|p| p.grad().iter().any(|g| !g.is_finite())) {
            return Err(Error::Diverged { step });
        }
        adam.step(model.params_mut());
        model.project();
        let mse = mse_sum * inv;
        let row = LogRow { step, loss: value, mse_db: crate::metrics::db_from_mse(mse, 1.0), rate_bpp: bpp_sum * inv };
        on_step(&row);
        log.rows.push(row);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = Parameter::new("x", vec![3.0, -2.0]);
        let mut adam = Adam::new(AdamConfig { lr: 0.05, ..AdamConfig::default() });
        for _ in 0..2000 {
            let g: Vec<f64> = p.values().iter().map(|v| 2.0 * v).collect();
            p.zero_grad();
            p.accumulate_grad(&g);
            adam.step(std::iter::once(&mut p));
        }
        assert!(p.values().iter().all(|v| v.abs() < 1e-3), "{:?}", p.values());
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = Parameter::new("x", vec![1.0]);
        p.accumulate_grad(&[123.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(std::iter::once(&mut p));
        assert!((p.values()[0] - (1.0 - 1e-4)).abs() < 1e-12);
    }

    #[test]
    fn defaults_match_reported_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.adam.lr, c.batch_size), (1e-4, 10));
        c.validate().unwrap();
    }

    #[test]
    fn synthetic_images_are_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = synthetic_image(Order::new(3).unwrap(), 3, &mut rng);
        assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = m.data().iter().sum::<f64>() / m.data().len() as f64;
        assert!(m.data().iter().any(|v| (v - mean).abs() > 0.05));
    }
}
