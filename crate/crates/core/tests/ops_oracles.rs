mod common;

use common::*;
use oslo::healpix::{neighbors, PixelId};
use oslo::ops::*;
use oslo::tensor::{MapShape, SphereMap};

/// Convolution as an explicit `(L_out * P) x (L_in * P)` matrix.
fn dense_conv(x: &SphereMap, k: &Kernel) -> Vec<f64> {
    let p = x.npix();
    let order = x.order();
    let shape = x.shape();
    let cols = k.l_in * p;
    let mut a = vec![0.0; k.l_out * p * cols];
    for i in 0..p {
        let global = shape.offset() + i as u64;
        let rec = neighbors(PixelId::new(order, global).unwrap());
        for l in 0..k.l_out {
            let row = (l * p + i) * cols;
            for c in 0..k.l_in {
                a[row + c * p + i] += k.weight(l, 0, c);
            }
            for (slot, n) in rec.neighbor.iter().enumerate() {
                let Some(n) = n else { continue };
                let Some(j) = shape.local_index(n.index()) else { continue };
                for c in 0..k.l_in {
                    a[row + c * p + j] += k.weight(l, slot + 1, c);
                }
            }
        }
    }
    let mut y = vec![0.0; k.l_out * p];
    for (r, out) in y.iter_mut().enumerate() {
        *out = (0..cols).map(|c| a[r * cols + c] * x.data()[c]).sum::<f64>();
        if let Some(b) = &k.bias {
            *out += b[r / p];
        }
    }
    y
}

#[test]
fn conv_matches_dense_matrix_at_order_2() {
    let mut r = rng(11);
    let x = random_map(2, 3, &mut r);
    let mut k = Kernel::init_uniform(3, 4, true, &mut r);
    k.bias = Some(random_vec(4, &mut r));
    let y = conv1hop_map(&x, &k).unwrap();
    assert_eq!(y.npix(), 192);
    assert!(max_abs_diff(y.data(), &dense_conv(&x, &k)) < 1e-12);
}

#[test]
fn conv_matches_dense_matrix_on_patch() {
    let mut r = rng(12);
    let full = random_map(3, 2, &mut r);
    let spec = PatchSpec::new(PixelId::new(order(1), 17).unwrap(), 2).unwrap();
    let x = spec.extract(&full).unwrap();
    let k = Kernel::init_uniform(2, 2, false, &mut r);
    assert!(max_abs_diff(conv1hop_map(&x, &k).unwrap().data(), &dense_conv(&x, &k)) < 1e-12);
}

#[test]
fn conv_is_linear() {
    let mut r = rng(13);
    let x = random_map(3, 2, &mut r);
    let z = random_map(3, 2, &mut r);
    let k = Kernel::init_uniform(2, 3, false, &mut r);
    let (a, b) = (0.7, -1.3);
    let mix = SphereMap::with_shape(x.shape(), x.data().iter().zip(z.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
    let lhs = conv1hop_map(&mix, &k).unwrap();
    let cx = conv1hop_map(&x, &k).unwrap();
    let cz = conv1hop_map(&z, &k).unwrap();
    let rhs: Vec<f64> = cx.data().iter().zip(cz.data()).map(|(p, q)| a * p + b * q).collect();
    assert!(max_abs_diff(lhs.data(), &rhs) < 1e-10);
}

#[test]
fn patched_conv_differs_from_full_only_at_boundary() {
    let mut r = rng(14);
    let full = random_map(3, 2, &mut r);
    let k = Kernel::init_uniform(2, 2, true, &mut r);
    let y_full = conv1hop_map(&full, &k).unwrap();
    for root in 0..12u64 {
        let spec = PatchSpec::new(PixelId::new(order(0), root).unwrap(), 3).unwrap();
        let y = conv1hop_map(&spec.extract(&full).unwrap(), &k).unwrap();
        let offset = spec.shape(1).offset() as usize;
        let mut boundary_diffs = 0;
        for i in 0..spec.npix() {
            let interior = spec.boundary_mask[i].iter().all(|&b| b == 1);
            for d in 0..2 {
                let same = y.get(d, i) == y_full.get(d, offset + i);
                if interior {
                    assert!(same, "root {root} pixel {i}");
                } else if !same {
                    boundary_diffs += 1;
                }
            }
        }
        assert!(boundary_diffs > 0);
    }
}

#[test]
fn two_hop_aggregations_compose() {
    let mut r = rng(15);
    let x = random_map(2, 2, &mut r);
    let k1 = Kernel::init_uniform(2, 3, true, &mut r);
    let k2 = Kernel::init_uniform(3, 3, true, &mut r);
    let z1 = conv1hop_map(&x, &k1).unwrap();
    let z2 = conv1hop_map(&z1, &k2).unwrap();
    let ks = [k1, k2];

    let cat = conv_nhop_map(&x, &ks, AggregationMode::Concatenation, 1).unwrap();
    assert_eq!(cat.channels(), 6);
    assert_eq!(&cat.data()[..z1.data().len()], z1.data());
    assert_eq!(&cat.data()[z1.data().len()..], z2.data());

    let sum = conv_nhop_map(&x, &ks, AggregationMode::Addition, 1).unwrap();
    let expect: Vec<f64> = z1.data().iter().zip(z2.data()).map(|(a, b)| a + b).collect();
    assert!(max_abs_diff(sum.data(), &expect) < 1e-12);

    let max = conv_nhop_map(&x, &ks, AggregationMode::Max, 1).unwrap();
    let expect: Vec<f64> = z1.data().iter().zip(z2.data()).map(|(a, b)| a.max(*b)).collect();
    assert_eq!(max.data(), &expect[..]);
}

#[test]
fn strided_conv_equals_stride_one_at_visiting_set() {
    let mut r = rng(16);
    let x = random_map(3, 2, &mut r);
    let ks = [Kernel::init_uniform(2, 2, true, &mut r), Kernel::init_uniform(2, 2, true, &mut r)];
    for mode in [AggregationMode::Concatenation, AggregationMode::Max, AggregationMode::Addition] {
        let dense = conv_nhop_map(&x, &ks, mode, 1).unwrap();
        for s in [2usize, 4, 8] {
            let strided = conv_nhop_map(&x, &ks, mode, s).unwrap();
            assert_eq!(strided.npix() * s * s, x.npix());
            for d in 0..strided.channels() {
                for j in 0..strided.npix() {
                    assert_eq!(strided.get(d, j), dense.get(d, j * s * s), "{mode:?} s={s}");
                }
            }
        }
    }
}

#[test]
fn subsample_of_broadcast_constant_is_constant() {
    let c = SphereMap::constant(MapShape::full(order(1), 4), 0.25);
    let up = pixel_shuffle_map(&c, 1).unwrap();
    let y = strided_subsample_map(&up, 2).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.25));
}

#[test]
fn pooling_matches_descendant_loop() {
    let mut r = rng(17);
    let x = random_map(3, 2, &mut r);
    for kind in [PoolKind::Average, PoolKind::Max] {
        let y = pool_map(&x, kind, 2).unwrap();
        assert_eq!(y.order().value(), 1);
        for d in 0..2 {
            for i in 0..48u64 {
                let kids: Vec<f64> = PixelId::new(order(1), i)
                    .unwrap()
                    .descendants(2)
                    .unwrap()
                    .map(|c| x.get(d, c.index() as usize))
                    .collect();
                let expect = match kind {
                    PoolKind::Average => kids.iter().sum::<f64>() / kids.len() as f64,
                    PoolKind::Max => kids.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                };
                assert!((y.get(d, i as usize) - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn average_pool_upsample_pool_is_pool() {
    let mut r = rng(18);
    let x = random_map(4, 1, &mut r);
    let once = pool_map(&x, PoolKind::Average, 2).unwrap();
    let again = pool_map(&upsample_nearest_map(&once, 2).unwrap(), PoolKind::Average, 2).unwrap();
    assert!(max_abs_diff(once.data(), again.data()) < 1e-10);
}

#[test]
fn shuffle_round_trips() {
    let mut r = rng(19);
    for levels in 0..3u8 {
        let x = random_map(1, 2 << (2 * levels), &mut r);
        let y = pixel_shuffle_map(&x, levels).unwrap();
        assert_eq!(y.npix(), x.npix() << (2 * levels));
        assert_eq!(pixel_unshuffle_map(&y, levels).unwrap(), x);
    }
}

#[test]
fn spconv_composes_conv_and_shuffle() {
    let mut r = rng(20);
    let x = random_map(1, 3, &mut r);
    let ks = [Kernel::init_uniform(3, 8, true, &mut r), Kernel::init_uniform(8, 8, true, &mut r)];
    let y = spconv_map(&x, &ks, AggregationMode::Addition, 1).unwrap();
    let expect = pixel_shuffle_map(&conv_nhop_map(&x, &ks, AggregationMode::Addition, 1).unwrap(), 1).unwrap();
    assert_eq!(y.order().value(), 2);
    assert_eq!(y.channels(), 2);
    assert!(max_abs_diff(y.data(), expect.data()) < 1e-12);
}
