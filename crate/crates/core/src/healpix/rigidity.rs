//! Neighborhood rigidity: where each compass neighbor lands on the plane
//! tangent to the sphere at the central pixel, and how much that position
//! varies over the grid.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::neighbors::{neighbor_indices, NO_NEIGHBOR};
use super::nested::pix2ang;
use super::{Direction, Order, PixelId, SphericalPoint};

/// Pixels sampled when the grid is too large to enumerate.
pub const RIGIDITY_SAMPLE_SIZE: u64 = 3_000_000;
/// Seed of the stratified sample.
pub const RIGIDITY_SAMPLE_SEED: u64 = 0x05105;
/// Highest order enumerated exhaustively by [`RigidityMode::Auto`].
const FULL_ENUMERATION_MAX_ORDER: u8 = 8;
/// Centers this close to a pole take local north from the `phi = 0` meridian.
const POLE_EPS: f64 = 1e-9;

/// Neighbor position on the gnomonic tangent plane of the central pixel,
/// `+y` pointing to local north and `+x` to local east.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentOffset {
    pub dx: f64,
    pub dy: f64,
}

impl TangentOffset {
    pub fn distance(self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// Bearing clockwise from north in `(-pi, pi]`.
    pub fn bearing(self) -> f64 {
        self.dx.atan2(self.dy)
    }
}

/// Gnomonic projection of a point at latitude `lat1` onto the plane tangent
/// at latitude `lat0`, given the latitude and longitude differences.
///
/// Latitude difference is passed separately so regular grids can supply
/// their exact step.
pub fn gnomonic_offset(lat0: f64, lat1: f64, dlat: f64, dlon: f64) -> TangentOffset {
    let (s_lat, s_lon) = ((0.5 * dlat).sin(), (0.5 * dlon).sin());
    let h = s_lat * s_lat + lat0.cos() * lat1.cos() * s_lon * s_lon;
    let c = 2.0 * h.sqrt().min(1.0).asin();
    let (sin_dlon, cos_dlon) = dlon.sin_cos();
    let az = (sin_dlon * lat1.cos()).atan2(lat0.cos() * lat1.sin() - lat0.sin() * lat1.cos() * cos_dlon);
    let r = c.tan();
    TangentOffset { dx: r * az.sin(), dy: r * az.cos() }
}

fn wrap_pi(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

fn offset_between(center: SphericalPoint, other: SphericalPoint) -> TangentOffset {
    let phi0 = if center.theta < POLE_EPS || center.theta > PI - POLE_EPS { 0.0 } else { center.phi };
    let lat0 = FRAC_PI_2 - center.theta;
    let lat1 = FRAC_PI_2 - other.theta;
    gnomonic_offset(lat0, lat1, lat1 - lat0, wrap_pi(other.phi - phi0))
}

/// Tangent-plane offsets of the 8 neighbors of `p`; `None` where absent.
pub fn tangent_offsets(p: PixelId) -> [Option<TangentOffset>; 8] {
    let center = pix2ang(p);
    neighbor_indices(p).map(|n| {
        (n != NO_NEIGHBOR)
            .then(|| offset_between(center, pix2ang(PixelId::new_unchecked(p.order(), n as u64))))
    })
}

/// Running weighted mean / variance (West's update and Chan's merge).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    weight: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64, w: f64) {
        self.merge(&Moments { weight: w, mean: x, m2: 0.0 });
    }

    fn merge(&mut self, other: &Moments) {
        if other.weight == 0.0 {
            return;
        }
        let total = self.weight + other.weight;
        let delta = other.mean - self.mean;
        self.mean += delta * (other.weight / total);
        self.m2 += other.m2 + delta * delta * (self.weight * other.weight / total);
        self.weight = total;
    }

    fn std(&self) -> f64 {
        if self.weight == 0.0 {
            0.0
        } else {
            (self.m2 / self.weight).max(0.0).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct DirAccumulator {
    dist: Moments,
    angle: Moments,
}

type GridAccumulator = [DirAccumulator; 8];

fn accumulate(acc: &mut GridAccumulator, dir: Direction, off: TangentOffset, weight: f64) {
    let slot = &mut acc[dir.slot()];
    slot.dist.push(off.distance(), weight);
    slot.angle.push(wrap_pi(off.bearing() - dir.nominal_bearing()), weight);
}

fn merge_all(parts: impl IntoIterator<Item = GridAccumulator>) -> GridAccumulator {
    let mut total = GridAccumulator::default();
    for part in parts {
        for (t, p) in total.iter_mut().zip(part.iter()) {
            t.dist.merge(&p.dist);
            t.angle.merge(&p.angle);
        }
    }
    total
}

/// Statistics of one neighbor direction, distances on the unit-sphere
/// tangent plane and angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionStats {
    pub direction: &'static str,
    pub samples: f64,
    pub mean_dist: f64,
    pub std_dist: f64,
    pub mean_angle_deg: f64,
    pub std_angle_deg: f64,
    pub rel_std_pct: f64,
}

/// Per-direction rigidity table plus the mean of the 8 relative deviations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityTable {
    pub grid: String,
    pub rows: Vec<DirectionStats>,
    pub mean_rel_std_pct: f64,
}

impl RigidityTable {
    fn from_accumulator(grid: String, acc: &GridAccumulator) -> Self {
        let rows: Vec<DirectionStats> = Direction::ALL
            .iter()
            .map(|&d| {
                let a = &acc[d.slot()];
                let mean = a.dist.mean;
                let std = a.dist.std();
                DirectionStats {
                    direction: d.name(),
                    samples: a.dist.weight,
                    mean_dist: mean,
                    std_dist: std,
                    mean_angle_deg: (d.nominal_bearing() + a.angle.mean).to_degrees(),
                    std_angle_deg: a.angle.std().to_degrees(),
                    rel_std_pct: if mean > 0.0 { 100.0 * std / mean } else { 0.0 },
                }
            })
            .collect();
        let mean_rel_std_pct = rows.iter().map(|r| r.rel_std_pct).sum::<f64>() / 8.0;
        RigidityTable { grid, rows, mean_rel_std_pct }
    }

    pub fn row(&self, dir: Direction) -> &DirectionStats {
        &self.rows[dir.slot()]
    }

    /// CSV with header `direction,mean_dist,std_dist,rel_std_pct`, one row
    /// per direction and a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("direction,mean_dist,std_dist,rel_std_pct\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.9e},{:.9e},{:.4}", r.direction, r.mean_dist, r.std_dist, r.rel_std_pct);
        }
        let _ = writeln!(out, "mean,,,{:.4}", self.mean_rel_std_pct);
        out
    }
}

/// How pixels are chosen for [`rigidity_statistics_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigidityMode {
    /// Full enumeration up to order 8, stratified sample above.
    Auto,
    Full,
    /// One pixel drawn uniformly from each of `count` equal index strata.
    Sampled { count: u64, seed: u64 },
}

const CHUNK: u64 = 1 << 16;

fn healpix_accumulate(order: Order, pixels: &[u64]) -> GridAccumulator {
    let mut acc = GridAccumulator::default();
    for &i in pixels {
        let p = PixelId::new_unchecked(order, i);
        for (dir, off) in Direction::ALL.iter().zip(tangent_offsets(p)) {
            if let Some(off) = off {
                accumulate(&mut acc, *dir, off, 1.0);
            }
        }
    }
    acc
}

/// Rigidity statistics of the HEALPix grid at `order` in [`RigidityMode::Auto`].
pub fn rigidity_statistics(order: Order) -> RigidityTable {
    rigidity_statistics_with(order, RigidityMode::Auto)
}

pub fn rigidity_statistics_with(order: Order, mode: RigidityMode) -> RigidityTable {
    let npix = order.npix();
    let mode = match mode {
        RigidityMode::Auto if order.value() > FULL_ENUMERATION_MAX_ORDER => {
            RigidityMode::Sampled { count: RIGIDITY_SAMPLE_SIZE, seed: RIGIDITY_SAMPLE_SEED }
        }
        RigidityMode::Auto => RigidityMode::Full,
        m => m,
    };
    let pixels: Vec<u64> = match mode {
        RigidityMode::Sampled { count, seed } if count < npix => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|s| {
                    let lo = (s as u128 * npix as u128 / count as u128) as u64;
                    let hi = ((s + 1) as u128 * npix as u128 / count as u128) as u64;
                    rng.gen_range(lo..hi)
                })
                .collect()
        }
        _ => (0..npix).collect(),
    };
    let parts: Vec<GridAccumulator> = pixels
        .par_chunks(CHUNK as usize)
        .map(|chunk| healpix_accumulate(order, chunk))
        .collect();
    RigidityTable::from_accumulator(format!("healpix order {}", order.value()), &merge_all(parts))
}

/// Rigidity statistics of an equirectangular grid with `height` rows and
/// `width` columns (pixel centers at half-integer steps). Every pixel of a
/// row has identical neighborhoods, so each row is evaluated once and
/// weighted by `width`. Rows at the top and bottom edge contribute only
/// the neighbors that exist.
pub fn erp_rigidity_statistics(height: usize, width: usize) -> RigidityTable {
    let dlat = PI / height as f64;
    let dlon = 2.0 * PI / width as f64;
    let steps: [(Direction, i32, i32); 8] = [
        (Direction::SW, -1, -1),
        (Direction::W, 0, -1),
        (Direction::NW, 1, -1),
        (Direction::N, 1, 0),
        (Direction::NE, 1, 1),
        (Direction::E, 0, 1),
        (Direction::SE, -1, 1),
        (Direction::S, -1, 0),
    ];
    let mut acc = GridAccumulator::default();
    for v in 0..height {
        let lat0 = FRAC_PI_2 - PI * (v as f64 + 0.5) / height as f64;
        for &(dir, up, east) in &steps {
            let row = v as i64 - up as i64;
            if row < 0 || row >= height as i64 {
                continue;
            }
            let lat1 = FRAC_PI_2 - PI * (row as f64 + 0.5) / height as f64;
            let off = gnomonic_offset(lat0, lat1, up as f64 * dlat, east as f64 * dlon);
            accumulate(&mut acc, dir, off, width as f64);
        }
    }
    RigidityTable::from_accumulator(format!("erp {height}x{width}"), &acc)
}
