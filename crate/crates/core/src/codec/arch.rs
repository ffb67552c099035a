use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::healpix::{Order, MAX_ORDER};
use crate::ops::AggregationMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Gdn,
    Relu,
}

/// Shape of the autoencoder. `stride` and `hyper_stride` count pixels
/// skipped, so a stride of 4 lowers the order by one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub input_order: u8,
    pub image_channels: usize,
    pub num_stages: usize,
    pub n: usize,
    pub m: usize,
    pub hop: usize,
    pub aggregation: AggregationMode,
    pub stride: usize,
    pub hyper_stride: usize,
    pub nonlinearity: Nonlinearity,
    pub bias: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            input_order: 6,
            image_channels: 3,
            num_stages: 3,
            n: 32,
            m: 48,
            hop: 2,
            aggregation: AggregationMode::Addition,
            stride: 4,
            hyper_stride: 4,
            nonlinearity: Nonlinearity::Gdn,
            bias: true,
        }
    }
}

fn log4(step: usize, what: &str) -> Result<u8> {
    if step == 0 || !step.is_power_of_two() || step.trailing_zeros() % 2 != 0 {
        return Err(Error::InvalidArgument(format!("{what} {step} is not a power of 4")));
    }
    Ok((step.trailing_zeros() / 2) as u8)
}

impl ArchConfig {
    /// Order levels removed by one analysis stage.
    pub fn stage_levels(&self) -> Result<u8> {
        log4(self.stride, "stride")
    }

    pub fn hyper_levels(&self) -> Result<u8> {
        log4(self.hyper_stride, "hyper stride")
    }

    /// Levels between the input and the latents.
    pub fn latent_levels(&self) -> Result<u8> {
        Ok(self.stage_levels()? * self.num_stages as u8)
    }

    /// Levels between the input and the hyper-latents.
    pub fn total_levels(&self) -> Result<u8> {
        Ok(self.latent_levels()? + 2 * self.hyper_levels()?)
    }

    pub fn latent_order(&self) -> Result<Order> {
        Order::new(self.input_order)?.checked_sub(self.latent_levels()?)
    }

    pub fn hyper_order(&self) -> Result<Order> {
        Order::new(self.input_order)?.checked_sub(self.total_levels()?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_order > MAX_ORDER {
            return Err(Error::OrderTooLarge(self.input_order));
        }
        if self.num_stages == 0 || self.n == 0 || self.m == 0 || self.hop == 0 || self.image_channels == 0 {
            return Err(Error::InvalidArgument("stages, channels and hop must be positive".into()));
        }
        // every convolution needs an input of order >= 1
        let total = self.total_levels()?;
        if total as usize + 1 > self.input_order as usize {
            return Err(Error::InvalidArgument(format!(
                "{} stages of stride {} and hyper stride {} need input order >= {}, got {}",
                self.num_stages,
                self.stride,
                self.hyper_stride,
                total + 1,
                self.input_order
            )));
        }
        if self.aggregation == AggregationMode::Concatenation {
            let up = 1usize << (2 * self.stage_levels()?);
            let hup = 1usize << (2 * self.hyper_levels()?);
            for c in [self.n, self.m, self.n * up, self.image_channels * up, self.n * hup] {
                if c % self.hop != 0 {
                    return Err(Error::InvalidArgument(format!("{c} channels cannot be split over {} hops", self.hop)));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_orders() {
        let a = ArchConfig::default();
        a.validate().unwrap();
        assert_eq!(a.latent_order().unwrap().value(), 3);
        assert_eq!(a.hyper_order().unwrap().value(), 1);
    }

    #[test]
    fn four_stages_need_order_seven() {
        let a = ArchConfig { num_stages: 4, ..ArchConfig::default() };
        assert!(a.validate().is_err());
        ArchConfig { input_order: 7, ..a }.validate().unwrap();
    }

    #[test]
    fn rejects_bad_strides_and_unknown_fields() {
        assert!(ArchConfig { stride: 2, ..ArchConfig::default() }.validate().is_err());
        assert!(serde_json::from_str::<ArchConfig>(r#"{"n": 8, "bogus": 1}"#).is_err());
        let a: ArchConfig = serde_json::from_str(r#"{"n": 8, "aggregation": "max"}"#).unwrap();
        assert_eq!((a.n, a.aggregation, a.m), (8, AggregationMode::Max, 48));
    }
}
