use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use super::nested::{pix2xyf, xyf2pix};
use super::{Direction, Order, PixelId, MAX_ORDER};

/// Sentinel stored in [`NeighborTable`] for an absent neighbor.
pub const NO_NEIGHBOR: u32 = u32::MAX;

/// Highest order whose neighbor table is memoized process-wide.
const CACHE_MAX_ORDER: u8 = 10;

// Face-local step for SW, W, NW, N, NE, E, SE, S.
const X_OFFSET: [i32; 8] = [-1, -1, 0, 1, 1, 1, 0, -1];
const Y_OFFSET: [i32; 8] = [0, 1, 1, 1, 0, -1, -1, -1];

// Face reached when stepping off face `f` through the edge or corner
// identified by the row (3x3 layout, 4 = stay on face). -1: no face there.
const FACE_TRANSITION: [[i8; 12]; 9] = [
    [8, 9, 10, 11, -1, -1, -1, -1, 10, 11, 8, 9], // S
    [5, 6, 7, 4, 8, 9, 10, 11, 9, 10, 11, 8],     // SE
    [-1, -1, -1, -1, 5, 6, 7, 4, -1, -1, -1, -1], // E
    [4, 5, 6, 7, 11, 8, 9, 10, 11, 8, 9, 10],     // SW
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],       // center
    [1, 2, 3, 0, 0, 1, 2, 3, 5, 6, 7, 4],         // NE
    [-1, -1, -1, -1, 7, 4, 5, 6, -1, -1, -1, -1], // W
    [3, 0, 1, 2, 3, 0, 1, 2, 4, 5, 6, 7],         // NW
    [2, 3, 0, 1, -1, -1, -1, -1, 0, 1, 2, 3],     // N
];

// Coordinate fix-up after the face change, per face row (north, equator,
// south): bit 0 mirrors x, bit 1 mirrors y, bit 2 swaps x and y.
const SWAP: [[u8; 3]; 9] = [
    [0, 0, 3], // S
    [0, 0, 6], // SE
    [0, 0, 0], // E
    [0, 0, 5], // SW
    [0, 0, 0], // center
    [5, 0, 0], // NE
    [0, 0, 0], // W
    [6, 0, 0], // NW
    [3, 0, 0], // N
];

/// The eight compass-labeled neighbors of a pixel. A missing neighbor keeps
/// its slot with `mask = 0`; no pixel is substituted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborRecord {
    pub neighbor: [Option<PixelId>; 8],
}

impl NeighborRecord {
    pub fn get(&self, dir: Direction) -> Option<PixelId> {
        self.neighbor[dir.slot()]
    }

    /// 1 where the neighbor exists, 0 where it is absent.
    pub fn mask(&self) -> [u8; 8] {
        self.neighbor.map(|n| n.is_some() as u8)
    }

    pub fn count(&self) -> usize {
        self.neighbor.iter().flatten().count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Direction, PixelId)> + '_ {
        Direction::ALL
            .iter()
            .zip(self.neighbor.iter())
            .filter_map(|(d, n)| n.map(|n| (*d, n)))
    }
}

/// Raw neighbor indices of `p`, [`NO_NEIGHBOR`] where absent.
pub(crate) fn neighbor_indices(p: PixelId) -> [u32; 8] {
    let order = p.order();
    let nside = order.nside() as i32;
    let (ix, iy, face) = pix2xyf(p);
    let (ix, iy) = (ix as i32, iy as i32);
    let mut out = [NO_NEIGHBOR; 8];

    if ix > 0 && ix < nside - 1 && iy > 0 && iy < nside - 1 {
        for m in 0..8 {
            let x = (ix + X_OFFSET[m]) as u32;
            let y = (iy + Y_OFFSET[m]) as u32;
            out[m] = xyf2pix(order, x, y, face) as u32;
        }
        return out;
    }

    for m in 0..8 {
        let mut x = ix + X_OFFSET[m];
        let mut y = iy + Y_OFFSET[m];
        let mut nb = 4usize;
        if x < 0 {
            x += nside;
            nb -= 1;
        } else if x >= nside {
            x -= nside;
            nb += 1;
        }
        if y < 0 {
            y += nside;
            nb -= 3;
        } else if y >= nside {
            y -= nside;
            nb += 3;
        }
        let f = FACE_TRANSITION[nb][face as usize];
        if f < 0 {
            continue;
        }
        let bits = SWAP[nb][face as usize >> 2];
        if bits & 1 != 0 {
            x = nside - x - 1;
        }
        if bits & 2 != 0 {
            y = nside - y - 1;
        }
        if bits & 4 != 0 {
            std::mem::swap(&mut x, &mut y);
        }
        out[m] = xyf2pix(order, x as u32, y as u32, f as u8) as u32;
    }
    out
}

/// Neighbors of `p` labeled SW, W, NW, N, NE, E, SE, S.
///
/// At order 0 the base faces do not have the 8-neighbor structure; the
/// result there follows the same table lookup and is not meaningful for
/// convolution.
pub fn neighbors(p: PixelId) -> NeighborRecord {
    let raw = neighbor_indices(p);
    NeighborRecord {
        neighbor: raw.map(|n| (n != NO_NEIGHBOR).then(|| PixelId::new_unchecked(p.order(), n as u64))),
    }
}

/// Precomputed neighbor indices for every pixel of one order. Immutable
/// once built and shared between threads.
#[derive(Debug)]
pub struct NeighborTable {
    order: Order,
    entries: Vec<[u32; 8]>,
}

impl NeighborTable {
    pub fn build(order: Order) -> Self {
        let entries = (0..order.npix())
            .into_par_iter()
            .map(|i| neighbor_indices(PixelId::new_unchecked(order, i)))
            .collect();
        NeighborTable { order, entries }
    }

    pub fn order(&self) -> Order {
        self.order
    }

    /// Indices of the 8 neighbors of pixel `index`, [`NO_NEIGHBOR`] where absent.
    #[inline]
    pub fn get(&self, index: usize) -> &[u32; 8] {
        &self.entries[index]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Shared neighbor table for `order`. Orders up to 10 are built once per
/// process and reused; higher orders are built on every call.
pub fn neighbor_table(order: Order) -> Arc<NeighborTable> {
    static CACHE: [OnceLock<Arc<NeighborTable>>; (MAX_ORDER + 1) as usize] =
        [const { OnceLock::new() }; (MAX_ORDER + 1) as usize];
    if order.value() > CACHE_MAX_ORDER {
        return Arc::new(NeighborTable::build(order));
    }
    CACHE[order.value() as usize]
        .get_or_init(|| Arc::new(NeighborTable::build(order)))
        .clone()
}
