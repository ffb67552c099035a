use std::f64::consts::{FRAC_PI_2, PI};

use super::{Order, PixelId, SphericalPoint};

/// Ring index of the southern corner of each base face, in units of `N_side`.
const JRLL: [i64; 12] = [2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4];
/// Longitude of the face center, in units of `pi/4`.
const JPLL: [i64; 12] = [1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7];

/// Spreads the low 32 bits of `v` onto the even bit positions.
#[inline]
fn spread_bits(v: u32) -> u64 {
    let mut x = v as u64;
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

/// Inverse of [`spread_bits`]: gathers the even bits.
#[inline]
fn compress_bits(v: u64) -> u32 {
    let mut x = v & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x >> 4)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x >> 8)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x >> 16)) & 0x0000_0000_FFFF_FFFF;
    x as u32
}

/// Nested index from face-local coordinates. `x` occupies the even bits.
#[inline]
pub fn xyf2pix(order: Order, x: u32, y: u32, face: u8) -> u64 {
    ((face as u64) << (2 * order.value())) | spread_bits(x) | (spread_bits(y) << 1)
}

/// Face-local `(x, y, face)` of a nested pixel. `x` grows toward the
/// north-east edge of the face and `y` toward the north-west.
#[inline]
pub fn pix2xyf(p: PixelId) -> (u32, u32, u8) {
    let shift = 2 * p.order().value() as u32;
    let face = (p.index() >> shift) as u8;
    let local = p.index() & ((1u64 << shift) - 1);
    (compress_bits(local), compress_bits(local >> 1), face)
}

/// `(z, sin(theta), phi)` of a pixel center.
fn pix2zphi(p: PixelId) -> (f64, f64, f64) {
    let nside = p.order().nside() as i64;
    let (ix, iy, face) = pix2xyf(p);
    let (ix, iy) = (ix as i64, iy as i64);
    let f = face as usize;
    let nl4 = 4 * nside;
    let fact2 = 4.0 / (12 * nside * nside) as f64;

    let jr = JRLL[f] * nside - ix - iy - 1;
    let (nr, z, sth, kshift) = if jr < nside {
        let nr = jr;
        let tmp = (nr * nr) as f64 * fact2;
        (nr, 1.0 - tmp, (tmp * (2.0 - tmp)).sqrt(), 0)
    } else if jr > 3 * nside {
        let nr = nl4 - jr;
        let tmp = (nr * nr) as f64 * fact2;
        (nr, tmp - 1.0, (tmp * (2.0 - tmp)).sqrt(), 0)
    } else {
        let z = (2 * nside - jr) as f64 * (2.0 / (3 * nside) as f64);
        (nside, z, ((1.0 - z) * (1.0 + z)).sqrt(), (jr - nside) & 1)
    };

    let mut jp = (JPLL[f] * nr + ix - iy + 1 + kshift) / 2;
    if jp > nl4 {
        jp -= nl4;
    }
    if jp < 1 {
        jp += nl4;
    }
    let phi = (jp as f64 - (kshift + 1) as f64 * 0.5) * (FRAC_PI_2 / nr as f64);
    (z, sth, phi)
}

/// Center of `p`.
pub fn pix2ang(p: PixelId) -> SphericalPoint {
    let (z, sth, phi) = pix2zphi(p);
    SphericalPoint { theta: sth.atan2(z), phi }
}

/// Center of `p` as a unit vector.
pub fn pix2vec(p: PixelId) -> [f64; 3] {
    let (z, sth, phi) = pix2zphi(p);
    let (sp, cp) = phi.sin_cos();
    [sth * cp, sth * sp, z]
}

/// Pixel at `order` containing `pt`.
pub fn ang2pix(pt: SphericalPoint, order: Order) -> PixelId {
    let nside = order.nside() as i64;
    let (sth, z) = pt.theta.sin_cos();
    let za = z.abs();
    let mut tt = pt.phi.rem_euclid(2.0 * PI) * (2.0 / PI);
    if tt >= 4.0 {
        tt -= 4.0;
    }

    let (face, ix, iy) = if za <= 2.0 / 3.0 {
        let temp1 = nside as f64 * (0.5 + tt);
        let temp2 = nside as f64 * (z * 0.75);
        let jp = (temp1 - temp2) as i64;
        let jm = (temp1 + temp2) as i64;
        let ifp = jp >> order.value();
        let ifm = jm >> order.value();
        let face = if ifp == ifm {
            ifp | 4
        } else if ifp < ifm {
            ifp
        } else {
            ifm + 8
        };
        let ix = jm & (nside - 1);
        let iy = nside - (jp & (nside - 1)) - 1;
        (face, ix, iy)
    } else {
        let ntt = (tt as i64).min(3);
        let tp = tt - ntt as f64;
        // sqrt(3 (1 - |z|)) evaluated from sin(theta) to keep polar precision
        let tmp = if za < 0.99 {
            nside as f64 * (3.0 * (1.0 - za)).sqrt()
        } else {
            nside as f64 * sth * (3.0 / (1.0 + za)).sqrt()
        };
        let jp = ((tp * tmp) as i64).min(nside - 1);
        let jm = (((1.0 - tp) * tmp) as i64).min(nside - 1);
        if z >= 0.0 {
            (ntt, nside - jm - 1, nside - jp - 1)
        } else {
            (ntt + 8, jp, jm)
        }
    };
    PixelId::new_unchecked(order, xyf2pix(order, ix as u32, iy as u32, face as u8))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_spreading_round_trip() {
        for v in [0u32, 1, 2, 3, 0x1234, 0xFFFF, 8191] {
            assert_eq!(compress_bits(spread_bits(v)), v);
        }
    }

    #[test]
    fn xyf_round_trip() {
        let order = Order::new(4).unwrap();
        for index in 0..order.npix() {
            let p = PixelId::new(order, index).unwrap();
            let (x, y, f) = pix2xyf(p);
            assert_eq!(xyf2pix(order, x, y, f), index);
        }
    }

    #[test]
    fn cos_theta_sums_to_zero() {
        let order = Order::new(2).unwrap();
        let s: f64 = (0..order.npix())
            .map(|i| pix2ang(PixelId::new(order, i).unwrap()).theta.cos())
            .sum();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn pole_is_in_polar_corner_pixel() {
        let order = Order::new(3).unwrap();
        for phi in [0.0, 1.0, 3.0, 5.5] {
            let p = ang2pix(SphericalPoint::new(0.0, phi), order);
            let face = p.face();
            assert!(face < 4);
            let theta = pix2ang(p).theta;
            let min_in_face = p
                .ancestor(3)
                .unwrap()
                .descendants(3)
                .unwrap()
                .map(|q| pix2ang(q).theta)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(theta, min_in_face);
        }
    }
}
