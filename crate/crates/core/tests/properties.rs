mod common;

use common::*;
use oslo::codec::{gaussian_bits, quantize, LatentFile};
use oslo::healpix::*;
use oslo::ops::{pixel_shuffle_map, pixel_unshuffle_map};
use oslo::resample::{read_hpxm_from, write_hpxm_to, Dtype};
use oslo::tensor::{MapShape, SphereMap};
use proptest::prelude::*;

fn pixel() -> impl Strategy<Value = PixelId> {
    (0u8..=12).prop_flat_map(|o| {
        let order = Order::new(o).unwrap();
        (0..order.npix()).prop_map(move |i| PixelId::new(order, i).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn center_maps_back_to_its_pixel(p in pixel()) {
        prop_assert_eq!(ang2pix(pix2ang(p), p.order()), p);
    }

    #[test]
    fn point_lies_in_its_ancestors(z in -1.0f64..1.0, phi in 0.0f64..std::f64::consts::TAU, o in 1u8..=13) {
        let pt = SphericalPoint::new(z.acos(), phi);
        let fine = ang2pix(pt, Order::new(o).unwrap());
        prop_assert_eq!(fine.parent().unwrap(), ang2pix(pt, Order::new(o - 1).unwrap()));
    }

    #[test]
    fn neighbor_relation_is_symmetric(p in pixel()) {
        for (_, n) in neighbors(p).iter() {
            prop_assert!(neighbors(n).iter().any(|(_, back)| back == p), "{:?} -> {:?}", p, n);
        }
    }

    #[test]
    fn children_share_the_parent(p in pixel()) {
        for c in p.children().unwrap() {
            prop_assert_eq!(c.parent().unwrap(), p);
        }
    }

    #[test]
    fn shuffle_then_unshuffle_is_identity(seed in any::<u64>(), levels in 0u8..=2, channels in 1usize..=3) {
        let x = random_map(0, channels << (2 * levels), &mut rng(seed));
        let y = pixel_shuffle_map(&x, levels).unwrap();
        prop_assert_eq!(pixel_unshuffle_map(&y, levels).unwrap(), x);
    }

    #[test]
    fn quantized_values_are_integers(v in -1e6f64..1e6) {
        let q = quantize(v);
        prop_assert_eq!(q.fract(), 0.0);
        prop_assert!((q - v).abs() <= 0.5);
    }

    #[test]
    fn gaussian_bits_are_nonnegative(y in -50.0f64..50.0, sigma in 0.11f64..100.0) {
        let b = gaussian_bits(quantize(y), sigma);
        prop_assert!(b >= 0.0 && b.is_finite());
    }

    #[test]
    fn hpxm_round_trips(seed in any::<u64>(), o in 0u8..=3, channels in 1usize..=4) {
        let mut r = rng(seed);
        let x = random_map(o, channels, &mut r);
        let mut buf = Vec::new();
        write_hpxm_to(&mut buf, &x, Dtype::F64).unwrap();
        let (back, dtype) = read_hpxm_from(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(dtype, Dtype::F64);
        prop_assert_eq!(back, x);
    }

    #[test]
    fn truncated_hpxm_is_rejected(cut in 1usize..64) {
        let x = SphereMap::constant(MapShape::full(Order::new(1).unwrap(), 1), 0.5);
        let mut buf = Vec::new();
        write_hpxm_to(&mut buf, &x, Dtype::F32).unwrap();
        let short = &buf[..buf.len() - cut.min(buf.len())];
        prop_assert!(read_hpxm_from(&mut &short[..]).is_err());
    }

    #[test]
    fn latent_file_bit_flips_are_detected(byte in 0usize..200, bit in 0u8..8) {
        let file = LatentFile {
            arch_hash: [7; 32],
            input_order: 2,
            latent_order: 1,
            hyper_order: 0,
            latent_channels: 1,
            hyper_channels: 1,
            lambda: 0.01,
            rate_bits: 12.5,
            wspsnr: 30.0,
            y: (0..48).collect(),
            nu: vec![-1; 12],
        };
        let mut bytes = file.to_bytes();
        prop_assert_eq!(LatentFile::from_bytes(&bytes).unwrap(), file);
        let i = byte % bytes.len();
        bytes[i] ^= 1 << bit;
        prop_assert!(LatentFile::from_bytes(&bytes).is_err());
    }
}
