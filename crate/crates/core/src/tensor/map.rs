use crate::error::{Error, Result};
use crate::healpix::{Order, PixelId};

/// Which part of the sphere a map covers.
///
/// A patch is the full descendant block of one pixel `root` at order
/// `order - depth`; its pixels are the contiguous nested range
/// `[root * 4^depth, (root + 1) * 4^depth)` and are stored with local
/// indices starting at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Domain {
    #[default]
    Full,
    Patch { root: u64, depth: u8 },
}

/// Geometry of a [`SphereMap`]: grid order, channel count and covered domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MapShape {
    pub order: Order,
    pub channels: usize,
    pub domain: Domain,
}

impl MapShape {
    pub fn full(order: Order, channels: usize) -> Self {
        MapShape { order, channels, domain: Domain::Full }
    }

    /// Pixels stored per channel.
    pub fn npix(&self) -> usize {
        match self.domain {
            Domain::Full => self.order.npix() as usize,
            Domain::Patch { depth, .. } => 1usize << (2 * depth as u32),
        }
    }

    pub fn len(&self) -> usize {
        self.npix() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nested index of the first stored pixel.
    pub fn offset(&self) -> u64 {
        match self.domain {
            Domain::Full => 0,
            Domain::Patch { root, depth } => root << (2 * depth as u32),
        }
    }

    /// Local position of global pixel `index`, if it lies in the domain.
    #[inline]
    pub fn local_index(&self, index: u64) -> Option<usize> {
        match self.domain {
            Domain::Full => Some(index as usize),
            Domain::Patch { root, depth } => {
                (index >> (2 * depth as u32) == root).then(|| (index - (root << (2 * depth as u32))) as usize)
            }
        }
    }

    pub fn with_channels(self, channels: usize) -> Self {
        MapShape { channels, ..self }
    }

    /// Shape after removing `levels` orders (pooling or stride).
    pub fn coarsen(self, levels: u8) -> Result<Self> {
        let order = self.order.checked_sub(levels)?;
        let domain = match self.domain {
            Domain::Full => Domain::Full,
            Domain::Patch { root, depth } => {
                let depth = depth.checked_sub(levels).ok_or_else(|| {
                    Error::OrderUnderflow(format!("patch of depth {depth} cannot lose {levels} levels"))
                })?;
                Domain::Patch { root, depth }
            }
        };
        Ok(MapShape { order, domain, ..self })
    }

    /// Shape after adding `levels` orders (pixel shuffle).
    pub fn refine(self, levels: u8) -> Result<Self> {
        let order = self.order.checked_add(levels)?;
        let domain = match self.domain {
            Domain::Full => Domain::Full,
            Domain::Patch { root, depth } => Domain::Patch { root, depth: depth + levels },
        };
        Ok(MapShape { order, domain, ..self })
    }
}

/// Multi-channel signal on a HEALPix grid, stored channel-major: element
/// `(d, i)` lives at `d * npix + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereMap {
    shape: MapShape,
    data: Vec<f64>,
}

impl SphereMap {
    /// Full-sphere map. Rejects wrong lengths and non-finite values.
    pub fn new(order: Order, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_shape(MapShape::full(order, channels), data)
    }

    pub fn with_shape(shape: MapShape, data: Vec<f64>) -> Result<Self> {
        if shape.channels == 0 {
            return Err(Error::ShapeMismatch("a map needs at least one channel".into()));
        }
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values ({} channels x {} pixels), got {}",
                shape.len(),
                shape.channels,
                shape.npix(),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain { op: "SphereMap::new", detail: format!("non-finite value at {pos}") });
        }
        Ok(SphereMap { shape, data })
    }

    pub(crate) fn from_parts_unchecked(shape: MapShape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        SphereMap { shape, data }
    }

    pub fn zeros(shape: MapShape) -> Self {
        SphereMap { shape, data: vec![0.0; shape.len()] }
    }

    pub fn constant(shape: MapShape, value: f64) -> Self {
        SphereMap { shape, data: vec![value; shape.len()] }
    }

    /// Builds a map from `f(channel, global_pixel)`.
    pub fn from_fn(shape: MapShape, mut f: impl FnMut(usize, PixelId) -> f64) -> Self {
        let npix = shape.npix();
        let offset = shape.offset();
        let mut data = Vec::with_capacity(shape.len());
        for d in 0..shape.channels {
            for i in 0..npix {
                data.push(f(d, PixelId::new_unchecked(shape.order, offset + i as u64)));
            }
        }
        SphereMap { shape, data }
    }

    pub fn shape(&self) -> MapShape {
        self.shape
    }

    pub fn order(&self) -> Order {
        self.shape.order
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn domain(&self) -> Domain {
        self.shape.domain
    }

    pub fn npix(&self) -> usize {
        self.shape.npix()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, d: usize) -> &[f64] {
        let n = self.npix();
        &self.data[d * n..(d + 1) * n]
    }

    pub fn channel_mut(&mut self, d: usize) -> &mut [f64] {
        let n = self.npix();
        &mut self.data[d * n..(d + 1) * n]
    }

    #[inline]
    pub fn get(&self, d: usize, local: usize) -> f64 {
        self.data[d * self.npix() + local]
    }

    /// Copies the pixels of `root` (at order `order - depth`) into a patch map.
    pub fn extract_patch(&self, root: PixelId, depth: u8) -> Result<SphereMap> {
        if self.shape.domain != Domain::Full {
            return Err(Error::InvalidArgument("patches are cut from full-sphere maps".into()));
        }
        if root.order().checked_add(depth)? != self.order() {
            return Err(Error::ShapeMismatch(format!(
                "patch root {root} with depth {depth} does not match map order {}",
                self.order()
            )));
        }
        let shape = MapShape { domain: Domain::Patch { root: root.index(), depth }, ..self.shape };
        let n = shape.npix();
        let offset = shape.offset() as usize;
        let mut data = Vec::with_capacity(shape.len());
        for d in 0..self.channels() {
            data.extend_from_slice(&self.channel(d)[offset..offset + n]);
        }
        Ok(SphereMap { shape, data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
