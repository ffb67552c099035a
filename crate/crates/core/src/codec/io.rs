//! Model checkpoints and latent files.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::healpix::Order;
use crate::metrics::wspsnr_healpix;
use crate::tensor::{MapShape, SphereMap};

use super::arch::ArchConfig;
use super::model::{CodecModel, ForwardOutput, Quantizer};

pub const MODEL_MAGIC: &[u8; 4] = b"OSLM";
pub const LATENT_MAGIC: &[u8; 4] = b"OSLL";
const VERSION: u32 = 1;
const HASH_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    arch: ArchConfig,
    lambda: f64,
    params: Vec<ParamEntry>,
}

/// A model together with the rate weight it was trained for.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: CodecModel,
    pub lambda: f64,
}

fn seal(mut body: Vec<u8>) -> Vec<u8> {
    let digest = Sha256::digest(&body);
    body.extend_from_slice(&digest);
    body
}

fn unseal<'a>(bytes: &'a [u8], magic: &[u8; 4], what: &str) -> Result<&'a [u8]> {
    if bytes.len() < 8 + HASH_LEN || &bytes[..4] != magic {
        return Err(Error::Format(format!("not a {what} file")));
    }
    let (body, digest) = bytes.split_at(bytes.len() - HASH_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format(format!("{what} integrity hash mismatch")));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported {what} version {version}")));
    }
    Ok(&body[8..])
}

struct Cursor<'a> {
    rest: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.rest.len() < n {
            return Err(Error::Format("truncated file".into()));
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn finish(&self) -> Result<()> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!("{} trailing bytes", self.rest.len())))
        }
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            arch: self.model.config().clone(),
            lambda: self.lambda,
            params: self.model.params().map(|p| ParamEntry { name: p.name().to_string(), len: p.len() }).collect(),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 4 * self.model.num_values() + HASH_LEN);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.model.params() {
            for &v in p.values() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        seal(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { rest: unseal(bytes, MODEL_MAGIC, "model")? };
        let json_len = c.u32()? as usize;
        let manifest: Manifest = serde_json::from_slice(c.take(json_len)?)?;
        let mut model = CodecModel::new(manifest.arch, &mut ChaCha8Rng::seed_from_u64(0))?;
        if model.params().count() != manifest.params.len() {
            return Err(Error::ModelMismatch("parameter count does not match the architecture".into()));
        }
        for (p, entry) in model.params_mut().zip(&manifest.params) {
            if p.name() != entry.name || p.len() != entry.len {
                return Err(Error::ModelMismatch(format!("parameter {} does not match {}", entry.name, p.name())));
            }
            let raw = c.take(4 * entry.len)?;
            let values: Vec<f64> =
                raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64).collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("non-finite weight in {}", entry.name)));
            }
            p.set_values(&values)?;
        }
        c.finish()?;
        Ok(Checkpoint { model, lambda: manifest.lambda })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Quantized latents of one image plus the estimated rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFile {
    pub arch_hash: [u8; 32],
    pub input_order: u8,
    pub latent_order: u8,
    pub hyper_order: u8,
    pub latent_channels: usize,
    pub hyper_channels: usize,
    pub lambda: f64,
    pub rate_bits: f64,
    pub wspsnr: f64,
    pub y: Vec<i32>,
    pub nu: Vec<i32>,
}

fn to_ints(m: &SphereMap) -> Result<Vec<i32>> {
    m.data()
        .iter()
        .map(|&v| {
            if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                Err(Error::NonFinite("latent quantization"))
            } else {
                Ok(v as i32)
            }
        })
        .collect()
}

impl LatentFile {
    pub fn latents(&self) -> Result<(SphereMap, SphereMap)> {
        let ints = |order: u8, channels, v: &[i32]| {
            SphereMap::with_shape(MapShape::full(Order::new(order)?, channels), v.iter().map(|&i| i as f64).collect())
        };
        Ok((ints(self.latent_order, self.latent_channels, &self.y)?, ints(self.hyper_order, self.hyper_channels, &self.nu)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(80 + 4 * (self.y.len() + self.nu.len()));
        out.extend_from_slice(LATENT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.arch_hash);
        out.extend_from_slice(&[self.input_order, self.latent_order, self.hyper_order]);
        out.extend_from_slice(&(self.latent_channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.hyper_channels as u32).to_le_bytes());
        for v in [self.lambda, self.rate_bits, self.wspsnr] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.y.iter().chain(&self.nu) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        seal(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { rest: unseal(bytes, LATENT_MAGIC, "latent")? };
        let arch_hash: [u8; 32] = c.take(32)?.try_into().expect("32 bytes");
        let (input_order, latent_order, hyper_order) = (c.u8()?, c.u8()?, c.u8()?);
        let (latent_channels, hyper_channels) = (c.u32()? as usize, c.u32()? as usize);
        let (lambda, rate_bits, wspsnr) = (c.f64()?, c.f64()?, c.f64()?);
        if !(rate_bits >= 0.0) {
            return Err(Error::Format("negative rate".into()));
        }
        let mut ints = |order: u8, channels: usize| -> Result<Vec<i32>> {
            let n = Order::new(order)?.npix() as usize * channels;
            Ok(c.take(4 * n)?.chunks_exact(4).map(|b| i32::from_le_bytes(b.try_into().expect("4 bytes"))).collect())
        };
        let y = ints(latent_order, latent_channels)?;
        let nu = ints(hyper_order, hyper_channels)?;
        c.finish()?;
        Ok(LatentFile {
            arch_hash,
            input_order,
            latent_order,
            hyper_order,
            latent_channels,
            hyper_channels,
            lambda,
            rate_bits,
            wspsnr,
            y,
            nu,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Eval-mode forward pass packaged as a latent file.
pub fn encode_image(ckpt: &Checkpoint, x: &SphereMap) -> Result<(LatentFile, ForwardOutput)> {
    if x.domain() != crate::tensor::Domain::Full {
        return Err(Error::InvalidArgument("only full-sphere maps can be encoded to a file".into()));
    }
    let model = &ckpt.model;
    let out = model.encode_forward(x, Quantizer::Round)?;
    let file = LatentFile {
        arch_hash: model.config().hash(),
        input_order: x.order().value(),
        latent_order: out.y_q.order().value(),
        hyper_order: out.nu_q.order().value(),
        latent_channels: out.y_q.channels(),
        hyper_channels: out.nu_q.channels(),
        lambda: ckpt.lambda,
        rate_bits: out.rate_bits,
        wspsnr: wspsnr_healpix(x, &out.x_hat, 1.0)?,
        y: to_ints(&out.y_q)?,
        nu: to_ints(&out.nu_q)?,
    };
    Ok((file, out))
}

pub fn decode_image(model: &CodecModel, file: &LatentFile) -> Result<SphereMap> {
    if file.arch_hash != model.config().hash() {
        return Err(Error::ModelMismatch("latent file was produced by a different architecture".into()));
    }
    let (y, _) = file.latents()?;
    model.synthesize(&y)
}
