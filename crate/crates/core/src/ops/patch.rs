//! Random hierarchical patches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::healpix::{neighbor_table, Order, PixelId, NO_NEIGHBOR};
use crate::tensor::{Domain, MapShape, SphereMap};

/// The descendants of `root` at `depth` levels below it, with a per-pixel
/// mask of which neighbors stay inside the patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSpec {
    pub root: PixelId,
    pub depth: u8,
    /// `boundary_mask[local][k]` is 1 iff neighbor `k` exists and lies inside.
    pub boundary_mask: Vec<[u8; 8]>,
}

impl PatchSpec {
    pub fn new(root: PixelId, depth: u8) -> Result<Self> {
        let order = root.order().checked_add(depth)?;
        let table = neighbor_table(order);
        let children = root.descendants(depth)?.range();
        let boundary_mask = children
            .clone()
            .map(|i| {
                table
                    .get(i as usize)
                    .map(|n| (n != NO_NEIGHBOR && children.contains(&(n as u64))) as u8)
            })
            .collect();
        Ok(PatchSpec { root, depth, boundary_mask })
    }

    /// Order of the patch pixels.
    pub fn order(&self) -> Order {
        Order::new(self.root.order().value() + self.depth).expect("validated at construction")
    }

    /// Pixels per side.
    pub fn side(&self) -> usize {
        1 << self.depth
    }

    pub fn npix(&self) -> usize {
        self.boundary_mask.len()
    }

    pub fn domain(&self) -> Domain {
        Domain::Patch { root: self.root.index(), depth: self.depth }
    }

    pub fn shape(&self, channels: usize) -> MapShape {
        MapShape { order: self.order(), channels, domain: self.domain() }
    }

    /// Cuts this patch out of a full-sphere map.
    pub fn extract(&self, map: &SphereMap) -> Result<SphereMap> {
        map.extract_patch(self.root, self.depth)
    }
}

/// Draws a patch of `side x side` pixels at `order` with a uniformly random
/// root pixel.
pub fn make_patch(order: Order, side: usize, seed: u64) -> Result<PatchSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    make_patch_with(order, side, &mut rng)
}

pub fn make_patch_with(order: Order, side: usize, rng: &mut impl Rng) -> Result<PatchSpec> {
    if side == 0 || !side.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("patch side {side} is not a power of two")));
    }
    let depth = side.trailing_zeros() as u8;
    let root_order = order.checked_sub(depth).map_err(|_| {
        Error::InvalidArgument(format!("patch side {side} exceeds a base face at order {}", order.value()))
    })?;
    let root = PixelId::new(root_order, rng.gen_range(0..root_order.npix()))?;
    PatchSpec::new(root, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(v: u8) -> Order {
        Order::new(v).unwrap()
    }

    #[test]
    fn pixel_five_depth_two() {
        let p = PatchSpec::new(PixelId::new(o(0), 5).unwrap(), 2).unwrap();
        assert_eq!(p.order().value(), 2);
        assert_eq!(p.root.descendants(2).unwrap().range(), 80..96);
        assert_eq!(p.npix(), 16);
    }

    #[test]
    fn interior_has_full_mask() {
        let p = PatchSpec::new(PixelId::new(o(0), 4).unwrap(), 3).unwrap();
        let full = p.boundary_mask.iter().filter(|m| m.iter().all(|&b| b == 1)).count();
        // an 8x8 block has a 6x6 interior
        assert_eq!(full, 36);
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = make_patch(o(6), 16, 9).unwrap();
        let b = make_patch(o(6), 16, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.root.order().value(), 2);
        assert!(make_patch(o(3), 16, 0).is_err());
        assert!(make_patch(o(3), 3, 0).is_err());
    }
}
