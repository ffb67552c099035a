//! HEALPix nested-scheme pixelization.
//!
//! Pixels are addressed by a subdivision [`Order`] and a nested index. The
//! two low bits of an index select the child within its parent, so the
//! hierarchy is pure bit arithmetic. Centers, containment and neighbors are
//! computed from face-local `(x, y)` coordinates obtained by
//! de-interleaving the index bits.

mod nested;
mod neighbors;
mod rigidity;

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

pub use nested::{ang2pix, pix2ang, pix2vec, pix2xyf, xyf2pix};
pub use neighbors::{neighbor_table, neighbors, NeighborRecord, NeighborTable, NO_NEIGHBOR};
pub use rigidity::{
    erp_rigidity_statistics, gnomonic_offset, rigidity_statistics, rigidity_statistics_with,
    tangent_offsets, DirectionStats, RigidityMode, RigidityTable, TangentOffset,
    RIGIDITY_SAMPLE_SEED, RIGIDITY_SAMPLE_SIZE,
};

/// Highest supported subdivision level.
pub const MAX_ORDER: u8 = 13;

/// Subdivision level of the grid. `N_side = 2^order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Order(u8);

impl Order {
    pub const ZERO: Order = Order(0);

    pub fn new(value: u8) -> Result<Self> {
        if value > MAX_ORDER {
            return Err(Error::OrderTooLarge(value));
        }
        Ok(Order(value))
    }

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn nside(self) -> u32 {
        1 << self.0
    }

    #[inline]
    pub fn npix(self) -> u64 {
        12u64 << (2 * self.0)
    }

    pub fn checked_add(self, levels: u8) -> Result<Order> {
        Order::new(self.0.checked_add(levels).ok_or(Error::OrderTooLarge(u8::MAX))?)
    }

    pub fn checked_sub(self, levels: u8) -> Result<Order> {
        self.0
            .checked_sub(levels)
            .map(Order)
            .ok_or_else(|| Error::OrderUnderflow(format!("order {} minus {levels}", self.0)))
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<u8> for Order {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Order::new(value)
    }
}

/// Number of pixels of the grid at `order`: `12 * 4^order`.
#[inline]
pub fn npix(order: Order) -> u64 {
    order.npix()
}

/// A pixel address in the nested scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelId {
    order: Order,
    index: u64,
}

impl PixelId {
    pub fn new(order: Order, index: u64) -> Result<Self> {
        if index >= order.npix() {
            return Err(Error::PixelOutOfRange { index, order: order.value() });
        }
        Ok(PixelId { order, index })
    }

    /// Caller guarantees `index < npix(order)`.
    #[inline]
    pub(crate) fn new_unchecked(order: Order, index: u64) -> Self {
        debug_assert!(index < order.npix());
        PixelId { order, index }
    }

    #[inline]
    pub fn order(self) -> Order {
        self.order
    }

    #[inline]
    pub fn index(self) -> u64 {
        self.index
    }

    /// Base face (0..12) containing the pixel.
    #[inline]
    pub fn face(self) -> u8 {
        (self.index >> (2 * self.order.value())) as u8
    }

    pub fn parent(self) -> Result<PixelId> {
        let order = self.order.checked_sub(1)?;
        Ok(PixelId { order, index: self.index >> 2 })
    }

    pub fn children(self) -> Result<[PixelId; 4]> {
        let order = self.order.checked_add(1)?;
        let base = self.index << 2;
        Ok([0, 1, 2, 3].map(|m| PixelId { order, index: base + m }))
    }

    /// Descendants `depth` levels down: the contiguous index range
    /// `[index * 4^depth, (index + 1) * 4^depth)`.
    pub fn descendants(self, depth: u8) -> Result<Descendants> {
        let order = self.order.checked_add(depth)?;
        let shift = 2 * depth as u32;
        Ok(Descendants { order, start: self.index << shift, end: (self.index + 1) << shift })
    }

    /// Ancestor `levels` levels up.
    pub fn ancestor(self, levels: u8) -> Result<PixelId> {
        let order = self.order.checked_sub(levels)?;
        Ok(PixelId { order, index: self.index >> (2 * levels as u32) })
    }
}

impl fmt::Display for PixelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.index, self.order)
    }
}

/// Iterator over a contiguous block of nested indices.
#[derive(Debug, Clone)]
pub struct Descendants {
    order: Order,
    start: u64,
    end: u64,
}

impl Descendants {
    pub fn range(&self) -> std::ops::Range<u64> {
        self.start..self.end
    }
}

impl Iterator for Descendants {
    type Item = PixelId;
    fn next(&mut self) -> Option<PixelId> {
        (self.start < self.end).then(|| {
            self.start += 1;
            PixelId { order: self.order, index: self.start - 1 }
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.start) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Descendants {}

/// Compass label of a neighbor slot. The discriminant is the slot number
/// `k = 1..=8` used by the convolution kernel layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Direction {
    SW = 1,
    W = 2,
    NW = 3,
    N = 4,
    NE = 5,
    E = 6,
    SE = 7,
    S = 8,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::SW,
        Direction::W,
        Direction::NW,
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
    ];

    /// Slot number `k` in `1..=8`.
    #[inline]
    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based slot (`code() - 1`).
    #[inline]
    pub fn slot(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Option<Direction> {
        Direction::ALL.get(code.checked_sub(1)? as usize).copied()
    }

    /// The opposite compass direction.
    pub fn opposite(self) -> Direction {
        Direction::ALL[(self.slot() + 4) % 8]
    }

    /// Bearing measured clockwise from local north, in radians.
    pub fn nominal_bearing(self) -> f64 {
        let deg = match self {
            Direction::N => 0.0,
            Direction::NE => 45.0,
            Direction::E => 90.0,
            Direction::SE => 135.0,
            Direction::S => 180.0,
            Direction::SW => 225.0,
            Direction::W => 270.0,
            Direction::NW => 315.0,
        };
        f64::to_radians(deg)
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::SW => "SW",
            Direction::W => "W",
            Direction::NW => "NW",
            Direction::N => "N",
            Direction::NE => "NE",
            Direction::E => "E",
            Direction::SE => "SE",
            Direction::S => "S",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Point on the unit sphere: colatitude `theta` in `[0, pi]`, longitude
/// `phi` in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    /// Builds a point, wrapping `phi` into `[0, 2pi)` and clamping `theta`.
    pub fn new(theta: f64, phi: f64) -> Self {
        let mut phi = phi.rem_euclid(2.0 * PI);
        if phi >= 2.0 * PI {
            phi = 0.0;
        }
        SphericalPoint { theta: theta.clamp(0.0, PI), phi }
    }

    pub fn to_vec(self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn from_vec(v: [f64; 3]) -> Self {
        let r_xy = v[0].hypot(v[1]);
        SphericalPoint::new(r_xy.atan2(v[2]), v[1].atan2(v[0]))
    }

    /// Latitude in radians, `pi/2 - theta`.
    pub fn latitude(self) -> f64 {
        std::f64::consts::FRAC_PI_2 - self.theta
    }

    /// Great-circle distance to `other` in radians.
    pub fn angular_distance(self, other: SphericalPoint) -> f64 {
        let a = self.to_vec();
        let b = other.to_vec();
        angle_between(a, b)
    }
}

/// Angle between two unit vectors, accurate for small and large angles.
pub fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    sin.atan2(cos)
}

/// Pixels visited by a stride-`stride` convolution: every `stride^2`-th
/// nested index. Output position `j` is input pixel `j * stride^2`, the
/// first child of pixel `j` at order `order - log2(stride)`.
pub fn stride_visiting_set(order: Order, stride: usize) -> Result<Vec<PixelId>> {
    let levels = stride_levels(order, stride)?;
    let step = (stride * stride) as u64;
    let count = order.npix() >> (2 * levels as u32);
    Ok((0..count).map(|j| PixelId::new_unchecked(order, j * step)).collect())
}

/// Number of orders removed by `stride` (`log2(stride)`), validating it.
pub fn stride_levels(order: Order, stride: usize) -> Result<u8> {
    if stride == 0 || !stride.is_power_of_two() {
        return Err(Error::InvalidStride(stride));
    }
    let levels = stride.trailing_zeros() as u8;
    if levels > order.value() {
        return Err(Error::InvalidStride(stride));
    }
    Ok(levels)
}
